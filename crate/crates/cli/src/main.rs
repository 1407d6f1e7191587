//! `adstrength`: the ad text strength pipeline from raw pool to service.

mod commands;
mod common;

use clap::{Parser, Subcommand};

use commands::*;

#[derive(Debug, Parser)]
#[command(name = "adstrength", version, about = "Ad text strength scoring pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a pool file and print its summary.
    Ingest(IngestArgs),
    /// Seeded warm or cold train/validation/test split.
    Split(SplitArgs),
    /// Train an LR or NBLR pCTR model.
    TrainCtr(TrainArgs),
    /// AUC, relative AUC, KTC and SRCC of one or more models.
    EvalCtr(EvalCtrArgs),
    /// Weakly labeled similar/dissimilar ad pairs.
    GenPairs(GenPairsArgs),
    /// Cosine regression loss of an embedder on exported pairs.
    EvalPairs(EvalPairsArgs),
    /// Embed and score a pool into a nearest-neighbor index.
    BuildIndex(BuildIndexArgs),
    /// Precision@k per similarity notion.
    EvalRetrieval(EvalRetrievalArgs),
    /// Rate one ad text and list stronger neighbors.
    Tsi(TsiArgs),
    /// Share of test ads rated weak per threshold, as CSV.
    SweepDelta(SweepArgs),
    /// Recommendation and adoption rates of a composer event log.
    AnalyzeSessions(AnalyzeArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write a seeded synthetic corpus or fixture.
    SynthCorpus(SynthArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(&a),
        Command::Split(a) => split_cmd(&a),
        Command::TrainCtr(a) => train_ctr(&a),
        Command::EvalCtr(a) => eval_ctr(&a),
        Command::GenPairs(a) => gen_pairs(&a),
        Command::EvalPairs(a) => eval_pairs(&a),
        Command::BuildIndex(a) => build_index(&a),
        Command::EvalRetrieval(a) => eval_retrieval(&a),
        Command::Tsi(a) => tsi(&a),
        Command::SweepDelta(a) => sweep_delta(&a),
        Command::AnalyzeSessions(a) => analyze_sessions(&a),
        Command::Serve(a) => serve(&a),
        Command::SynthCorpus(a) => synth_corpus(&a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("ADSTRENGTH_LOG", "info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(common::exit_code(&e));
    }
}
