use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use lsm_core::config::ExperimentConfig;
use lsm_core::ensemble::{Ensemble, EnsembleSeeds, InputLayout};
use lsm_core::harness::{self, load_dataset, preprocess_sample, write_report, Manifest, SweepAxis, SynthMode, SynthSpec};
use lsm_core::preprocess::{read_csv, read_events, write_csv, write_events};

#[derive(Parser)]
#[command(name = "lsm", version, about = "Liquid state machine ensembles on event data")]
struct Cli {
    /// Worker threads for sample-level parallelism (all cores when omitted).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write report.json plus readout models.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace the topology/input/training seeds with N, N+1, N+2.
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment per value along an axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values; for d-list separate lists with `;`, e.g. "0;0,5;0,4,6".
        #[arg(long)]
        values: String,
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic multi-phase classification dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 3)]
        phases: usize,
        /// Put all class evidence in this phase instead of using phase order.
        #[arg(long)]
        signal_phase: Option<usize>,
        #[arg(long, default_value_t = 500)]
        train: usize,
        #[arg(long, default_value_t = 500)]
        test: usize,
        #[arg(long, default_value_t = 16)]
        width: u32,
        #[arg(long, default_value_t = 16)]
        height: u32,
        #[arg(long, default_value_t = 50)]
        phase_steps: usize,
        #[arg(long, default_value_t = 1000)]
        time_window_us: u64,
        #[arg(long, default_value_t = 0.25)]
        pattern_density: f64,
        #[arg(long, default_value_t = 0.1)]
        rate: f64,
        #[arg(long, default_value_t = 0.05)]
        noise_rate: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Convert between CSV (`t,x,y,p`) and the binary EVS1 event format.
    Convert {
        input: PathBuf,
        output: PathBuf,
        /// Sensor width for CSV input (max x + 1 when omitted).
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        height: Option<u32>,
        #[arg(long)]
        label: Option<u32>,
    },
    /// Export every member's reservoir and input wiring as text.
    TopoExport {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Input shape `channels,height,width`; read from the first dataset sample otherwise.
        #[arg(long)]
        input_shape: Option<String>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Partitions,
    DList,
    Window,
}

fn load_config(path: &Path, seed_override: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed_override {
        cfg.seeds.topology = s;
        cfg.seeds.input = s + 1;
        cfg.seeds.training = s + 2;
    }
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|_| anyhow::anyhow!("bad value `{t}`")))
        .collect()
}

fn parse_axis(axis: Axis, values: &str) -> Result<SweepAxis> {
    Ok(match axis {
        Axis::Partitions => SweepAxis::Partitions(parse_list(values)?),
        Axis::Window => SweepAxis::Window(parse_list(values)?),
        Axis::DList => SweepAxis::DList(
            values
                .split(';')
                .filter(|g| !g.trim().is_empty())
                .map(parse_list)
                .collect::<Result<_>>()?,
        ),
    })
}

fn is_csv(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn convert(input: &Path, output: &Path, width: Option<u32>, height: Option<u32>, label: Option<u32>) -> Result<()> {
    let stream = if is_csv(input) {
        let text = std::fs::read(input)?;
        let (w, h) = match (width, height) {
            (Some(w), Some(h)) => (w, h),
            _ => {
                let probe = read_csv(&text[..], u32::MAX, u32::MAX, label)?;
                let w = probe.events.iter().map(|e| u32::from(e.x) + 1).max().unwrap_or(1);
                let h = probe.events.iter().map(|e| u32::from(e.y) + 1).max().unwrap_or(1);
                (width.unwrap_or(w), height.unwrap_or(h))
            }
        };
        read_csv(&text[..], w, h, label)?
    } else {
        read_events(BufReader::new(File::open(input)?))?
    };
    let out = BufWriter::new(File::create(output)?);
    if is_csv(output) {
        write_csv(&stream, out)?;
    } else {
        write_events(&stream, out)?;
    }
    eprintln!("{} events -> {}", stream.len(), output.display());
    Ok(())
}

fn topo_export(cfg: &ExperimentConfig, out: &Path, shape: Option<String>) -> Result<()> {
    let (channels, height, width) = match shape {
        Some(s) => match parse_list::<usize>(&s)?.as_slice() {
            [c, h, w] => (*c, *h, *w),
            _ => bail!("--input-shape expects channels,height,width"),
        },
        None => {
            let manifest = Manifest::load(&cfg.manifest)?;
            let (_, first) = manifest.entries.first().context("manifest is empty")?;
            let stream = read_events(BufReader::new(File::open(first)?))?;
            let f = preprocess_sample(&stream, cfg)?;
            (f.channels, f.height, f.width)
        }
    };
    let layout = InputLayout {
        width,
        height,
        channels,
        weight: cfg.input.weight,
        density: cfg.input.density,
    };
    let seeds = EnsembleSeeds {
        topology: cfg.seeds.topology,
        input: cfg.seeds.input,
    };
    let e = Ensemble::build(&cfg.ensemble, cfg.reservoir.member_dims, &cfg.reservoir.law, &cfg.neuron, layout, seeds)?;
    std::fs::create_dir_all(out)?;
    for (k, m) in e.members.iter().enumerate() {
        std::fs::write(out.join(format!("member_{k}.topo")), m.topology.to_text())?;
        std::fs::write(out.join(format!("member_{k}.input")), m.input.to_text())?;
    }
    if !e.inter_edges.is_empty() {
        let mut s = format!("# inter-partition edges, concatenated indexing\nedges {}\n", e.inter_edges.len());
        for (a, b, w) in &e.inter_edges {
            s.push_str(&format!("{a} {b} {w}\n"));
        }
        std::fs::write(out.join("inter.edges"), s)?;
    }
    eprintln!("exported {} members to {}", e.members.len(), out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Run {
            config,
            seed_override,
            out,
        } => {
            let cfg = load_config(&config, seed_override, out)?;
            let artifacts = harness::run_config(&cfg)?;
            write_report(&artifacts, &cfg.output_dir)?;
            let s = &artifacts.report.summary;
            println!(
                "{}: test accuracy {:.4} +/- {:.4} over {} repeat(s), train {:.4}; report in {}",
                cfg.name,
                s.mean_test,
                s.std_test,
                artifacts.report.repeats.len(),
                s.mean_train,
                cfg.output_dir.display()
            );
        }
        Command::Sweep {
            config,
            axis,
            values,
            seed_override,
            out,
        } => {
            let cfg = load_config(&config, seed_override, out)?;
            let axis = parse_axis(axis, &values)?;
            let data = load_dataset(&cfg.manifest)?;
            let reports = harness::sweep(&cfg, &data, &axis)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            for r in &reports {
                std::fs::create_dir_all(&r.config.output_dir)?;
                std::fs::write(r.config.output_dir.join("report.json"), serde_json::to_string_pretty(r)?)?;
            }
            let table = harness::summary_table(&axis, &reports);
            std::fs::write(cfg.output_dir.join("sweep.tsv"), &table)?;
            print!("{table}");
        }
        Command::Synth {
            out,
            classes,
            phases,
            signal_phase,
            train,
            test,
            width,
            height,
            phase_steps,
            time_window_us,
            pattern_density,
            rate,
            noise_rate,
            seed,
        } => {
            let spec = SynthSpec {
                classes,
                phases,
                mode: signal_phase.map_or(SynthMode::Permutation, |phase| SynthMode::SinglePhase { phase }),
                width,
                height,
                phase_steps,
                time_window_us,
                pattern_density,
                rate,
                noise_rate,
                train,
                test,
                seed,
            };
            let samples = harness::write_synthetic(&spec, &out)?;
            println!("wrote {} samples and manifest.txt to {}", samples.len(), out.display());
        }
        Command::Convert {
            input,
            output,
            width,
            height,
            label,
        } => convert(&input, &output, width, height, label)?,
        Command::TopoExport {
            config,
            out,
            input_shape,
            seed_override,
        } => {
            let cfg = load_config(&config, seed_override, None)?;
            topo_export(&cfg, &out, input_shape)?;
        }
    }
    Ok(())
}
