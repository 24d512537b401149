mod args;
mod commands;
mod meta;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let config = cli.config.as_deref();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(config, a),
        Command::Embed(a) => commands::embed(config, a),
        Command::Dataset(a) => commands::dataset(config, a),
        Command::Train(a) => commands::train_cmd(config, a),
        Command::Eval(a) => commands::eval(config, a),
        Command::Sweep(a) => commands::sweep(config, a),
        Command::Report(a) => commands::report(config, a),
        Command::Synth(a) => commands::synth(config, a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.class().exit_code());
    }
}
