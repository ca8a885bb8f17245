use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, ValueEnum};

use flowsynth::hard_samples::HardSampleConfig;
use flowsynth::loss::LossConfig;
use flowsynth::pipeline::{self, EmitFlags, Mode, PipelineConfig};
use flowsynth::synthesis::SynthesisConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CliMode {
    /// Synthesize pseudo diagrams from OCR output (.tsv/.json inputs).
    Pseudo,
    /// Granulate diagram codes into connected 3-node sub-diagrams (.mmd inputs).
    Gran,
    /// Emit concatenated-word captions per OCR document (.tsv/.json inputs).
    CropCaptions,
    /// Evaluate loss kernels and gradients over an existing manifest.
    LossFixtures,
}

impl From<CliMode> for Mode {
    fn from(mode: CliMode) -> Mode {
        match mode {
            CliMode::Pseudo => Mode::Pseudo,
            CliMode::Gran => Mode::Gran,
            CliMode::CropCaptions => Mode::CropCaptions,
            CliMode::LossFixtures => Mode::LossFixtures,
        }
    }
}

/// Flowchart contrastive-data pipeline: pseudo diagram synthesis, rule-based
/// hard samples, deterministic SVG rendering, and loss-kernel fixtures.
///
/// Every flag can also be set through the environment with the FLOWSYNTH_
/// prefix (for example FLOWSYNTH_SEED=7). Logs go to stderr; data goes to
/// files and stdout only.
#[derive(Debug, Parser)]
#[command(name = "flowsynth", version)]
struct Cli {
    /// Pipeline mode.
    #[arg(long, value_enum, env = "FLOWSYNTH_MODE")]
    mode: CliMode,

    /// Input files or directories (manifest path in loss-fixtures mode).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,

    /// Output directory.
    #[arg(long, env = "FLOWSYNTH_OUT")]
    out: PathBuf,

    /// Seed for every randomized stage; identical seeds reproduce runs
    /// byte for byte.
    #[arg(long, default_value_t = 0, env = "FLOWSYNTH_SEED")]
    seed: u64,

    /// Nodes per synthesized pseudo diagram.
    #[arg(long, default_value_t = 3, env = "FLOWSYNTH_NODE_SIZE")]
    node_size: usize,

    /// Nearest-neighbour text combinations kept per document.
    #[arg(long, default_value_t = 5, env = "FLOWSYNTH_SAMPLING_SIZE")]
    sampling_size: usize,

    /// Cap on generated connection structures per combination.
    #[arg(long, default_value_t = 4, env = "FLOWSYNTH_MAX_DIAGRAMS")]
    max_diagrams: usize,

    /// Hard negative images per record.
    #[arg(long, default_value_t = 8, env = "FLOWSYNTH_NEG_IMAGES")]
    neg_images: usize,

    /// Hard negative captions per record.
    #[arg(long, default_value_t = 6, env = "FLOWSYNTH_NEG_CAPTIONS")]
    neg_captions: usize,

    /// Hard positive images per record.
    #[arg(long, default_value_t = 2, env = "FLOWSYNTH_POS_IMAGES")]
    pos_images: usize,

    /// Hard positive captions per record.
    #[arg(long, default_value_t = 2, env = "FLOWSYNTH_POS_CAPTIONS")]
    pos_captions: usize,

    /// Weight of the structure-aware loss term.
    #[arg(long, default_value_t = 0.1, env = "FLOWSYNTH_LAMBDA_SC")]
    lambda_sc: f64,

    /// Softmax temperature for the loss kernels.
    #[arg(long, default_value_t = 0.07, env = "FLOWSYNTH_TEMPERATURE")]
    temperature: f64,

    /// Per-axis node displacement range for hard positive moves.
    #[arg(long, default_value_t = 40.0, env = "FLOWSYNTH_MOVE_RANGE")]
    move_range: f64,

    /// Vertical tolerance in pixels when grouping OCR words into phrases.
    #[arg(long, default_value_t = 10.0, env = "FLOWSYNTH_Y_TOLERANCE")]
    y_tolerance: f64,

    /// Toy encoder dimension for loss fixtures.
    #[arg(long, default_value_t = 64, env = "FLOWSYNTH_DIM")]
    dim: usize,

    /// Records per embedding batch in loss-fixtures mode.
    #[arg(long, default_value_t = 4, env = "FLOWSYNTH_BATCH_SIZE")]
    batch_size: usize,

    /// Skip SVG emission.
    #[arg(long, env = "FLOWSYNTH_NO_SVG")]
    no_svg: bool,

    /// Skip diagram code emission.
    #[arg(long, env = "FLOWSYNTH_NO_CODES")]
    no_codes: bool,

    /// Skip captions in the manifest.
    #[arg(long, env = "FLOWSYNTH_NO_CAPTIONS")]
    no_captions: bool,

    /// Skip hard sample generation.
    #[arg(long, env = "FLOWSYNTH_NO_HARD_SETS")]
    no_hard_sets: bool,

    /// Run the loss-fixture report after generation.
    #[arg(long, env = "FLOWSYNTH_EMIT_LOSS_FIXTURES")]
    emit_loss_fixtures: bool,
}

impl Cli {
    fn into_config(self) -> PipelineConfig {
        PipelineConfig {
            mode: self.mode.into(),
            inputs: self.inputs,
            out_dir: self.out,
            seed: self.seed,
            synthesis: SynthesisConfig {
                node_size: self.node_size,
                sampling_size: self.sampling_size,
                max_diagrams: self.max_diagrams,
                seed: self.seed,
            },
            hard: HardSampleConfig {
                pos_images: self.pos_images,
                neg_images: self.neg_images,
                pos_captions: self.pos_captions,
                neg_captions: self.neg_captions,
                move_range: self.move_range,
                ..HardSampleConfig::default()
            },
            loss: LossConfig {
                lambda_sc: self.lambda_sc,
                temperature: self.temperature,
                ..LossConfig::default()
            },
            emit: EmitFlags {
                svg: !self.no_svg,
                codes: !self.no_codes,
                captions: !self.no_captions,
                hard_sets: !self.no_hard_sets,
                loss_fixtures: self.emit_loss_fixtures,
            },
            y_tolerance: self.y_tolerance,
            encode_dim: self.dim,
            batch_size: self.batch_size,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let cfg = cli.into_config();
    match pipeline::run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("[error] {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
