//! Parallel corpus ingestion: per-version verse files, alignment across
//! versions, deterministic train/test splits, and the canonical corpus file.
//!
//! Verse ordering is lexicographic over (book index, chapter, verse) using a
//! fixed 66-book canonical table; books not in the table sort after all
//! known books, alphabetically (case-insensitive).

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;

/// Canonical book ordering (Protestant 66-book canon).
pub const CANONICAL_BOOKS: [&str; 66] = [
    "Genesis",
    "Exodus",
    "Leviticus",
    "Numbers",
    "Deuteronomy",
    "Joshua",
    "Judges",
    "Ruth",
    "1 Samuel",
    "2 Samuel",
    "1 Kings",
    "2 Kings",
    "1 Chronicles",
    "2 Chronicles",
    "Ezra",
    "Nehemiah",
    "Esther",
    "Job",
    "Psalms",
    "Proverbs",
    "Ecclesiastes",
    "Song of Solomon",
    "Isaiah",
    "Jeremiah",
    "Lamentations",
    "Ezekiel",
    "Daniel",
    "Hosea",
    "Joel",
    "Amos",
    "Obadiah",
    "Jonah",
    "Micah",
    "Nahum",
    "Habakkuk",
    "Zephaniah",
    "Haggai",
    "Zechariah",
    "Malachi",
    "Matthew",
    "Mark",
    "Luke",
    "John",
    "Acts",
    "Romans",
    "1 Corinthians",
    "2 Corinthians",
    "Galatians",
    "Ephesians",
    "Philippians",
    "Colossians",
    "1 Thessalonians",
    "2 Thessalonians",
    "1 Timothy",
    "2 Timothy",
    "Titus",
    "Philemon",
    "Hebrews",
    "James",
    "1 Peter",
    "2 Peter",
    "1 John",
    "2 John",
    "3 John",
    "Jude",
    "Revelation",
];

fn book_index(book: &str) -> Option<usize> {
    let lower = book.trim().to_lowercase();
    CANONICAL_BOOKS.iter().position(|b| b.to_lowercase() == lower)
}

/// A (book, chapter, verse) reference. Uniquely identifies a verse within
/// one version.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VerseRef {
    pub book: String,
    pub chapter: u32,
    pub verse: u32,
}

impl VerseRef {
    pub fn new(book: impl Into<String>, chapter: u32, verse: u32) -> Self {
        VerseRef {
            book: book.into(),
            chapter,
            verse,
        }
    }

    /// Sort key: known books by canon index, unknown books after all known
    /// ones in case-insensitive alphabetical order.
    fn order_key(&self) -> (usize, String, u32, u32) {
        match book_index(&self.book) {
            Some(i) => (i, String::new(), self.chapter, self.verse),
            None => (
                CANONICAL_BOOKS.len(),
                self.book.trim().to_lowercase(),
                self.chapter,
                self.verse,
            ),
        }
    }
}

impl std::fmt::Display for VerseRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}:{}", self.book, self.chapter, self.verse)
    }
}

impl Ord for VerseRef {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.order_key().cmp(&other.order_key())
    }
}

impl PartialOrd for VerseRef {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// One verse with its text in every version of the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelVerse {
    #[serde(flatten)]
    pub verse_ref: VerseRef,
    /// Texts in the order of [`ParallelCorpus::versions`].
    pub texts: Vec<String>,
}

/// Verse-aligned corpus over a fixed set of versions.
///
/// Invariants: every verse carries a text for every declared version, verses
/// are sorted by reference, and references are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    pub versions: Vec<String>,
    pub verses: Vec<ParallelVerse>,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.verses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verses.is_empty()
    }

    pub fn version_index(&self, version: &str) -> Option<usize> {
        self.versions.iter().position(|v| v == version)
    }

    pub fn text(&self, verse_idx: usize, version: &str) -> Option<&str> {
        let vi = self.version_index(version)?;
        self.verses.get(verse_idx).map(|p| p.texts[vi].as_str())
    }

    /// Serialize to the canonical corpus file: a header line
    /// `{"versions":[...],"count":N}` followed by one JSON record per verse
    /// with fields in the fixed order `book, chapter, verse, texts`.
    /// Compact encoding, UTF-8, `\n` terminators; byte-exact round trips.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::json!({
            "versions": self.versions,
            "count": self.verses.len(),
        });
        writeln!(w, "{header}")?;
        for verse in &self.verses {
            let line = serde_json::to_string(verse)
                .map_err(|e| Error::Data(format!("corpus serialization: {e}")))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<ParallelCorpus> {
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Format("corpus file is empty".into()))??;
        #[derive(Deserialize)]
        struct Header {
            versions: Vec<String>,
            count: usize,
        }
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| Error::Format(format!("corpus header: {e}")))?;
        let mut verses = Vec::with_capacity(header.count);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let verse: ParallelVerse = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("corpus record {}: {e}", i + 1)))?;
            if verse.texts.len() != header.versions.len() {
                return Err(Error::Format(format!(
                    "corpus record {} has {} texts, expected {}",
                    i + 1,
                    verse.texts.len(),
                    header.versions.len()
                )));
            }
            verses.push(verse);
        }
        if verses.len() != header.count {
            return Err(Error::Format(format!(
                "corpus header declares {} verses, found {}",
                header.count,
                verses.len()
            )));
        }
        let corpus = ParallelCorpus {
            versions: header.versions,
            verses,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    fn validate(&self) -> Result<()> {
        for pair in self.verses.windows(2) {
            if pair[0].verse_ref >= pair[1].verse_ref {
                return Err(Error::Data(format!(
                    "corpus verses out of order or duplicated at {}",
                    pair[1].verse_ref
                )));
            }
        }
        for verse in &self.verses {
            if verse.texts.iter().any(|t| t.trim().is_empty()) {
                return Err(Error::Data(format!("empty text at {}", verse.verse_ref)));
            }
        }
        Ok(())
    }
}

/// Field mapping for version-file parsing. Export shapes vary, so the field
/// names (and optionally a JSON pointer to the record collection) are
/// configurable. TOML-loadable.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMapping {
    /// JSON pointer to the collection holding verse records; when empty the
    /// whole document is scanned recursively for objects that carry all four
    /// fields.
    pub records_pointer: String,
    pub book_field: String,
    pub chapter_field: String,
    pub verse_field: String,
    pub text_field: String,
}

impl Default for FieldMapping {
    fn default() -> Self {
        FieldMapping {
            records_pointer: String::new(),
            book_field: "book".into(),
            chapter_field: "chapter".into(),
            verse_field: "verse".into(),
            text_field: "text".into(),
        }
    }
}

impl FieldMapping {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("field mapping: {e}")))
    }
}

fn as_u32(v: &serde_json::Value) -> Option<u32> {
    match v {
        serde_json::Value::Number(n) => n.as_u64().map(|x| x as u32),
        serde_json::Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Compute the byte offset of a serde_json error position (1-based line and
/// column) within `bytes`.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut seen_lines = 1usize;
    let mut offset = 0usize;
    for (i, &b) in bytes.iter().enumerate() {
        if seen_lines == line {
            offset = i;
            break;
        }
        if b == b'\n' {
            seen_lines += 1;
        }
        offset = i + 1;
    }
    offset + column.saturating_sub(1)
}

/// Parse one version file (JSON export) into `(VerseRef, text)` pairs,
/// sorted canonically. Texts are trimmed of outer whitespace; no further
/// normalization is applied.
pub fn parse_version_file(
    bytes: &[u8],
    mapping: &FieldMapping,
) -> Result<Vec<(VerseRef, String)>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Encoding(e.to_string()))?;
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;

    let root = if mapping.records_pointer.is_empty() {
        &doc
    } else {
        doc.pointer(&mapping.records_pointer).ok_or_else(|| Error::Structural {
            field: mapping.records_pointer.clone(),
            context: Some("records pointer not found in document".into()),
        })?
    };

    let mut records = Vec::new();
    collect_records(root, mapping, &mut records)?;
    records.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(records)
}

/// Recursive walk collecting every object that carries the text field. Such
/// an object must then be a complete verse record; a missing book/chapter/
/// verse field is a structural error rather than a silent skip.
fn collect_records(
    v: &serde_json::Value,
    mapping: &FieldMapping,
    out: &mut Vec<(VerseRef, String)>,
) -> Result<()> {
    match v {
        serde_json::Value::Array(arr) => {
            for item in arr {
                collect_records(item, mapping, out)?;
            }
        }
        serde_json::Value::Object(obj) => {
            if let Some(text_val) = obj.get(&mapping.text_field) {
                let text = text_val
                    .as_str()
                    .ok_or_else(|| Error::Structural {
                        field: mapping.text_field.clone(),
                        context: Some("text field is not a string".into()),
                    })?
                    .trim()
                    .to_string();
                let book = obj
                    .get(&mapping.book_field)
                    .and_then(|b| b.as_str())
                    .ok_or_else(|| Error::Structural {
                        field: mapping.book_field.clone(),
                        context: Some("verse record".into()),
                    })?
                    .trim()
                    .to_string();
                let chapter = obj
                    .get(&mapping.chapter_field)
                    .and_then(as_u32)
                    .ok_or_else(|| Error::Structural {
                        field: mapping.chapter_field.clone(),
                        context: Some(format!("verse record in {book}")),
                    })?;
                let verse = obj
                    .get(&mapping.verse_field)
                    .and_then(as_u32)
                    .ok_or_else(|| Error::Structural {
                        field: mapping.verse_field.clone(),
                        context: Some(format!("verse record in {book} {chapter}")),
                    })?;
                out.push((VerseRef::new(book, chapter, verse), text));
            } else {
                for value in obj.values() {
                    collect_records(value, mapping, out)?;
                }
            }
        }
        _ => {}
    }
    Ok(())
}

/// Alignment output: the intersected corpus plus per-version drop counts.
#[derive(Debug, Clone)]
pub struct AlignReport {
    pub corpus: ParallelCorpus,
    /// Verses present in a version but dropped because some other required
    /// version lacks them.
    pub drops: BTreeMap<String, usize>,
}

/// Align per-version verse lists into a parallel corpus over the strict
/// intersection of their references. `required_versions` fixes the version
/// order of the output.
pub fn align(
    version_files: &HashMap<String, Vec<(VerseRef, String)>>,
    required_versions: &[String],
) -> Result<AlignReport> {
    if required_versions.len() < 2 {
        return Err(Error::Config(
            "alignment requires at least two versions".into(),
        ));
    }
    for v in required_versions {
        if !version_files.contains_key(v) {
            return Err(Error::Alignment(format!("version `{v}` has no verse list")));
        }
    }

    // Per-version ref -> text maps, rejecting duplicates.
    let mut maps: Vec<HashMap<&VerseRef, &str>> = Vec::with_capacity(required_versions.len());
    for v in required_versions {
        let list = &version_files[v];
        let mut m = HashMap::with_capacity(list.len());
        for (r, t) in list {
            if m.insert(r, t.as_str()).is_some() {
                return Err(Error::Data(format!("duplicate reference {r} in version `{v}`")));
            }
        }
        maps.push(m);
    }

    // Intersection of refs over all required versions.
    let mut common: Vec<&VerseRef> = maps[0]
        .keys()
        .filter(|r| maps[1..].iter().all(|m| m.contains_key(*r)))
        .copied()
        .collect();
    if common.is_empty() {
        return Err(Error::Alignment(
            "no verse reference is present in all required versions".into(),
        ));
    }
    common.sort();

    let mut drops = BTreeMap::new();
    for (v, m) in required_versions.iter().zip(&maps) {
        drops.insert(v.clone(), m.len() - common.len());
    }

    let mut verses = Vec::with_capacity(common.len());
    for r in common {
        let texts: Vec<String> = maps.iter().map(|m| m[r].to_string()).collect();
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::Data(format!(
                "empty text at {r} in version `{}`",
                required_versions[i]
            )));
        }
        verses.push(ParallelVerse {
            verse_ref: r.clone(),
            texts,
        });
    }

    Ok(AlignReport {
        corpus: ParallelCorpus {
            versions: required_versions.to_vec(),
            verses,
        },
        drops,
    })
}

/// Deterministic train/test split of `0..corpus.len()`.
///
/// The index list is shuffled with Fisher–Yates on ChaCha8 (see [`DetRng`]);
/// the first `round(test_fraction * N)` shuffled indices form the test set.
/// Both lists are returned sorted ascending. Identical inputs give identical
/// partitions on every platform.
pub fn split(
    corpus: &ParallelCorpus,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = corpus.len();
    if n < 2 {
        return Err(Error::Split(format!("need at least 2 verses, got {n}")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must be in (0,1), got {test_fraction}"
        )));
    }
    let k = (test_fraction * n as f64).round() as usize;
    let mut rng = DetRng::new(seed);
    let shuffled = rng.shuffled_indices(n);
    let mut test: Vec<usize> = shuffled[..k].to_vec();
    let mut train: Vec<usize> = shuffled[k..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Digest of a split, recorded in sweep results so grid points can prove
/// they consumed the same partition.
pub fn split_digest(train: &[usize], test: &[usize]) -> String {
    let mut s = String::from("train:");
    for i in train {
        s.push_str(&i.to_string());
        s.push(',');
    }
    s.push_str(";test:");
    for i in test {
        s.push_str(&i.to_string());
        s.push(',');
    }
    crate::rng::sha256_hex(s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ref_(b: &str, c: u32, v: u32) -> VerseRef {
        VerseRef::new(b, c, v)
    }

    #[test]
    fn parse_single_record() {
        let json = br#"{"verses":[{"book":"Genesis","chapter":1,"verse":1,"text":"In the beginning God created the heavens and the earth."}]}"#;
        let out = parse_version_file(json, &FieldMapping::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, ref_("Genesis", 1, 1));
        assert_eq!(
            out[0].1,
            "In the beginning God created the heavens and the earth."
        );
    }

    #[test]
    fn parse_empty_array() {
        let json = br#"{"verses":[]}"#;
        let out = parse_version_file(json, &FieldMapping::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn parse_sorts_canonically() {
        // Out-of-order 5-record fixture; hand-sorted expectation.
        let json = br#"[
            {"book":"Matthew","chapter":1,"verse":1,"text":"m11"},
            {"book":"Genesis","chapter":2,"verse":1,"text":"g21"},
            {"book":"Genesis","chapter":1,"verse":2,"text":"g12"},
            {"book":"Exodus","chapter":1,"verse":1,"text":"e11"},
            {"book":"Genesis","chapter":1,"verse":1,"text":"g11"}
        ]"#;
        let out = parse_version_file(json, &FieldMapping::default()).unwrap();
        let refs: Vec<String> = out.iter().map(|(r, _)| r.to_string()).collect();
        assert_eq!(
            refs,
            vec![
                "Genesis 1:1",
                "Genesis 1:2",
                "Genesis 2:1",
                "Exodus 1:1",
                "Matthew 1:1"
            ]
        );
    }

    #[test]
    fn parse_reports_byte_offset_on_malformed_json() {
        let bad = b"{\"verses\": [ }";
        let err = parse_version_file(bad, &FieldMapping::default()).unwrap_err();
        match err {
            Error::Parse { offset, .. } => assert!(offset > 0 && offset <= bad.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_reports_missing_field() {
        let json = br#"[{"book":"Genesis","verse":1,"text":"t"}]"#;
        let err = parse_version_file(json, &FieldMapping::default()).unwrap_err();
        match err {
            Error::Structural { field, .. } => assert_eq!(field, "chapter"),
            other => panic!("expected structural error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_non_utf8() {
        let bytes = vec![0xff, 0xfe, b'{', b'}'];
        assert!(matches!(
            parse_version_file(&bytes, &FieldMapping::default()),
            Err(Error::Encoding(_))
        ));
    }

    #[test]
    fn parse_with_custom_mapping_and_pointer() {
        let mapping = FieldMapping {
            records_pointer: "/data/rows".into(),
            book_field: "book_name".into(),
            chapter_field: "ch".into(),
            verse_field: "v".into(),
            text_field: "content".into(),
        };
        let json = br#"{"data":{"rows":[{"book_name":"John","ch":"3","v":"16","content":"  trimmed  "}]}}"#;
        let out = parse_version_file(json, &mapping).unwrap();
        assert_eq!(out[0].0, ref_("John", 3, 16));
        assert_eq!(out[0].1, "trimmed");
    }

    #[test]
    fn unknown_books_sort_after_known_alphabetically() {
        let mut refs = vec![
            ref_("Zeta Book", 1, 1),
            ref_("Revelation", 1, 1),
            ref_("Alpha Book", 1, 1),
            ref_("Genesis", 1, 1),
        ];
        refs.sort();
        let names: Vec<&str> = refs.iter().map(|r| r.book.as_str()).collect();
        assert_eq!(names, vec!["Genesis", "Revelation", "Alpha Book", "Zeta Book"]);
    }

    fn verse_list(refs: &[(&str, u32, u32)]) -> Vec<(VerseRef, String)> {
        refs.iter()
            .map(|&(b, c, v)| (ref_(b, c, v), format!("text {b} {c} {v}")))
            .collect()
    }

    #[test]
    fn align_intersects_and_reports_drops() {
        // A covers v1..v3, B covers v2..v4; intersection is {v2, v3}.
        let mut files = HashMap::new();
        files.insert(
            "A".to_string(),
            verse_list(&[("Genesis", 1, 1), ("Genesis", 1, 2), ("Genesis", 1, 3)]),
        );
        files.insert(
            "B".to_string(),
            verse_list(&[("Genesis", 1, 2), ("Genesis", 1, 3), ("Genesis", 1, 4)]),
        );
        let report = align(&files, &["A".into(), "B".into()]).unwrap();
        assert_eq!(report.corpus.len(), 2);
        assert_eq!(report.drops["A"], 1);
        assert_eq!(report.drops["B"], 1);
        assert_eq!(report.corpus.verses[0].verse_ref, ref_("Genesis", 1, 2));
        assert_eq!(report.corpus.verses[1].verse_ref, ref_("Genesis", 1, 3));
    }

    #[test]
    fn align_identical_sets_zero_drops() {
        let list = verse_list(&[("Genesis", 1, 1), ("Exodus", 2, 3)]);
        let mut files = HashMap::new();
        files.insert("A".to_string(), list.clone());
        files.insert("B".to_string(), list);
        let report = align(&files, &["A".into(), "B".into()]).unwrap();
        assert_eq!(report.corpus.len(), 2);
        assert!(report.drops.values().all(|&d| d == 0));
    }

    #[test]
    fn align_empty_intersection_errors() {
        let mut files = HashMap::new();
        files.insert("A".to_string(), verse_list(&[("Genesis", 1, 1)]));
        files.insert("B".to_string(), verse_list(&[("Genesis", 1, 2)]));
        assert!(matches!(
            align(&files, &["A".into(), "B".into()]),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn align_duplicate_ref_errors() {
        let mut files = HashMap::new();
        let mut list = verse_list(&[("Genesis", 1, 1)]);
        list.push((ref_("Genesis", 1, 1), "dup".into()));
        files.insert("A".to_string(), list);
        files.insert("B".to_string(), verse_list(&[("Genesis", 1, 1)]));
        let err = align(&files, &["A".into(), "B".into()]).unwrap_err();
        assert!(err.to_string().contains("Genesis 1:1"));
    }

    #[test]
    fn align_is_idempotent() {
        let mut files = HashMap::new();
        files.insert(
            "A".to_string(),
            verse_list(&[("Genesis", 1, 1), ("Exodus", 1, 1), ("John", 3, 16)]),
        );
        files.insert(
            "B".to_string(),
            verse_list(&[("Genesis", 1, 1), ("John", 3, 16)]),
        );
        let first = align(&files, &["A".into(), "B".into()]).unwrap().corpus;

        // Feed the aligned corpus back through align.
        let mut refiles = HashMap::new();
        for (vi, v) in first.versions.iter().enumerate() {
            refiles.insert(
                v.clone(),
                first
                    .verses
                    .iter()
                    .map(|p| (p.verse_ref.clone(), p.texts[vi].clone()))
                    .collect(),
            );
        }
        let second = align(&refiles, &first.versions).unwrap().corpus;
        assert_eq!(first, second);
    }

    fn tiny_corpus(n: usize) -> ParallelCorpus {
        let verses = (0..n)
            .map(|i| ParallelVerse {
                verse_ref: ref_("Genesis", 1, i as u32 + 1),
                texts: vec![format!("a{i}"), format!("b{i}")],
            })
            .collect();
        ParallelCorpus {
            versions: vec!["A".into(), "B".into()],
            verses,
        }
    }

    #[test]
    fn split_sizes_match_rounding() {
        let corpus = tiny_corpus(10);
        let (train, test) = split(&corpus, 0.1, 99).unwrap();
        assert_eq!(test.len(), 1);
        assert_eq!(train.len(), 9);
    }

    #[test]
    fn split_is_exhaustive_disjoint_partition() {
        let corpus = tiny_corpus(137);
        let (train, test) = split(&corpus, 0.25, 3).unwrap();
        let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..137).collect::<Vec<_>>());
    }

    #[test]
    fn split_same_seed_identical() {
        let corpus = tiny_corpus(50);
        let a = split(&corpus, 0.2, 7).unwrap();
        let b = split(&corpus, 0.2, 7).unwrap();
        assert_eq!(a, b);
        let c = split(&corpus, 0.2, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_rejects_tiny_corpus() {
        let corpus = tiny_corpus(1);
        assert!(matches!(split(&corpus, 0.5, 0), Err(Error::Split(_))));
    }

    #[test]
    fn corpus_file_round_trip_is_byte_exact() {
        let corpus = tiny_corpus(5);
        let mut bytes = Vec::new();
        corpus.save(&mut bytes).unwrap();
        let loaded = ParallelCorpus::load(&bytes[..]).unwrap();
        assert_eq!(corpus, loaded);
        let mut again = Vec::new();
        loaded.save(&mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn corpus_load_rejects_count_mismatch() {
        let corpus = tiny_corpus(3);
        let mut bytes = Vec::new();
        corpus.save(&mut bytes).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let truncated: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            ParallelCorpus::load(truncated.as_bytes()),
            Err(Error::Format(_))
        ));
    }
}
