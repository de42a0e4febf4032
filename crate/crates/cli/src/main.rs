use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tempo_guard::commands::{self, GenSource, EXIT_BENIGN, EXIT_USAGE};
use tempo_guard::config::{Preset, RunConfig};
use tempo_guard::Result;
use tempo_guard_core::attacksim::AttackKind;

#[derive(Parser)]
#[command(name = "tempo-guard", version, about = "Detect spoofed LiDAR points by temporal consistency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every frame of a sequence after the first L; exit 2 if any is attacked.
    Detect {
        #[command(flatten)]
        common: Common,
        /// Frame file.
        #[arg(long)]
        frames: Option<PathBuf>,
    },
    /// Seeded benchmark suite; CSV of per-frame verdicts.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        suite: Suite,
    },
    /// Re-cluster a suite's residuals over a (min_pts, eps) grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        suite: Suite,
        /// Comma-separated min_pts values.
        #[arg(long, value_delimiter = ',')]
        min_pts: Option<Vec<usize>>,
        /// Comma-separated eps values.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Run a suite at several coherence weights.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        suite: Suite,
        /// Comma-separated beta values.
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
    },
    /// Write a synthetic sequence and its ground-truth sidecar (`<out>.truth.json`).
    Gen {
        #[command(flatten)]
        common: Common,
        /// Emit a benchmark case of this kind instead of the configured scene.
        #[arg(long)]
        kind: Option<KindArg>,
        /// With --kind, spoof the last frame.
        #[arg(long, requires = "kind")]
        poisoned: bool,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    /// First scenario seed (also read from TEMPO_GUARD_SEED).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// History length L.
    #[arg(long)]
    history: Option<usize>,
    /// Decision threshold; scores above it are attacks.
    #[arg(long)]
    threshold: Option<f64>,
    /// Voxel side for thinning buffered frames.
    #[arg(long)]
    voxel: Option<f64>,
    /// Coherence weight of the flow solver.
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args)]
struct Suite {
    #[arg(long)]
    kind: Option<KindArg>,
    /// Number of paired cases.
    #[arg(long)]
    scenarios: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Dense,
    Sparse,
}

impl From<KindArg> for AttackKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Dense => AttackKind::Dense,
            KindArg::Sparse => AttackKind::Sparse,
        }
    }
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::from_env()?,
        };
        if let Some(v) = &self.out {
            c.out = Some(v.clone());
        }
        if let Some(v) = self.jobs {
            c.jobs = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.preset {
            c.preset = v;
        }
        if let Some(v) = self.history {
            c.synthesis.capacity = v;
        }
        if let Some(v) = self.threshold {
            c.detector.threshold = v;
        }
        if let Some(v) = self.voxel {
            c.synthesis.frame_voxel = Some(v);
        }
        if let Some(v) = self.beta {
            c.synthesis.sfe.beta = v;
        }
        Ok(c)
    }
}

impl Suite {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(k) = self.kind {
            c.suite.kind = k.into();
        }
        if let Some(n) = self.scenarios {
            c.suite.scenarios = n;
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Detect { common, frames } => {
            let mut c = common.load()?;
            if frames.is_some() {
                c.frames = frames;
            }
            if c.preset == Preset::Auto {
                c.preset = Preset::Dense;
            }
            commands::cmd_detect(&c)
        }
        Command::Benchmark { common, suite } => {
            let mut c = common.load()?;
            suite.apply(&mut c);
            commands::cmd_benchmark(&c).map(|_| EXIT_BENIGN)
        }
        Command::Sweep { common, suite, min_pts, eps } => {
            let mut c = common.load()?;
            suite.apply(&mut c);
            if let Some(v) = min_pts {
                c.sweep.min_pts = v;
            }
            if let Some(v) = eps {
                c.sweep.eps = v;
            }
            commands::cmd_sweep(&c).map(|_| EXIT_BENIGN)
        }
        Command::Ablate { common, suite, betas } => {
            let mut c = common.load()?;
            suite.apply(&mut c);
            if let Some(v) = betas {
                c.ablate.betas = v;
            }
            commands::cmd_ablate(&c).map(|_| EXIT_BENIGN)
        }
        Command::Gen { common, kind, poisoned } => {
            let c = common.load()?;
            let source = match kind {
                Some(k) => GenSource::Benchmark { kind: k.into(), poisoned },
                None => GenSource::Scene,
            };
            commands::cmd_gen(&c, source).map(|_| EXIT_BENIGN)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_BENIGN };
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
