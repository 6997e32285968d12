use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use altruroute_core::collective::Weights;
use altruroute_core::demand::{
    build_districts, compute_fleet_size, read_population_csv, sample_trips, sample_uniform_trips,
    write_trips_csv, DEFAULT_CELL_SIZE,
};
use altruroute_core::experiment::{
    beta_sweep, load_sweep, mine_setting_costs, normalize_cross_setting, read_existing,
    run_baselines, run_setting_detailed, write_medians_csv, write_report, ExperimentConfig,
    PreparedSetting, RunContext, RunSeeds, SweepTable,
};
use altruroute_core::mesosim::DEFAULT_VEHICLE_LENGTH;
use altruroute_core::network::{load_network, network_stats, GridSpec, NetworkStats};
use altruroute_core::plans::{write_baseline_csv, write_plan_dump, RouterCostTable};
use altruroute_core::routing::{edge_cost, shortest_route, CostMode};
use altruroute_core::seeds;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

/// Altruistic route selection experiments on road networks.
#[derive(Parser)]
#[command(name = "altruroute", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a grid network file.
    Grid(GridArgs),
    /// Print network statistics as CSV.
    Stats {
        #[arg(long)]
        net: PathBuf,
    },
    /// Route between two streets and print the edge list as CSV.
    Route {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long, default_value = "minlength")]
        mode: CostMode,
    },
    /// Sample origin/destination trips.
    Demand {
        #[arg(long)]
        net: PathBuf,
        /// Population CSV (`x_m,y_m,population`); uniform origins if omitted.
        #[arg(long)]
        pop: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CELL_SIZE)]
        cell: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fleet size from population, commuter share and periods.
    Fleet {
        #[arg(long)]
        population: u64,
        #[arg(long)]
        share: f64,
        #[arg(long, default_value_t = 6)]
        periods: u32,
    },
    /// Run the random-router baselines of a setting and mine router costs.
    Baseline {
        #[command(flatten)]
        study: StudyArgs,
        #[arg(long)]
        setting: String,
        /// Router cost table output.
        #[arg(long)]
        out: PathBuf,
        /// Raw per-trip baseline records.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// One optimization and simulation run, with full artifacts.
    Run {
        #[command(flatten)]
        study: StudyArgs,
        #[arg(long)]
        setting: String,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed_index: usize,
        /// Router cost table from `baseline`; mined on the fly if omitted.
        #[arg(long)]
        costs: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write `occupancy.csv` (`tick,edge,occupants`).
        #[arg(long)]
        dump_occupancy: bool,
    },
    /// Sweep beta over every configured setting (or one).
    SweepBeta {
        #[command(flatten)]
        study: StudyArgs,
        #[arg(long)]
        setting: Option<String>,
        /// Directory of `<label>.costs.csv` tables; missing ones are mined
        /// and written there.
        #[arg(long)]
        costs_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Skip cells already present with status ok in `--out`.
        #[arg(long)]
        resume: bool,
    },
    /// Sweep the fleet size of the configured load-sweep setting.
    SweepLoad {
        #[command(flatten)]
        study: StudyArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        medians: Option<PathBuf>,
        #[arg(long)]
        resume: bool,
    },
    /// Min-max normalize results pooled across settings.
    Normalize {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// JSON file receiving the per-metric min and max.
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Long-format plot data from results tables.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        medians: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long, default_value_t = 100.0)]
    length: f64,
    #[arg(long, default_value_t = 13.9)]
    speed: f64,
    #[arg(long, default_value_t = 1)]
    lanes: u32,
    /// Every k-th row and column becomes an arterial.
    #[arg(long)]
    arterial_every: Option<usize>,
    #[arg(long)]
    arterial_speed: Option<f64>,
    #[arg(long)]
    arterial_lanes: Option<u32>,
    /// Node displacement as a fraction of the edge length, below 0.5.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (overrides the config).
    #[arg(long)]
    workers: Option<usize>,
}

impl StudyArgs {
    fn load(&self) -> Result<(ExperimentConfig, RunContext)> {
        let cfg = ExperimentConfig::load(&self.config)?;
        let mut ctx = cfg.context();
        if self.workers.is_some() {
            ctx.workers = self.workers;
        }
        Ok((cfg, ctx))
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Grid(a) => {
            let spec = GridSpec {
                arterial_every: a.arterial_every,
                arterial_speed: a.arterial_speed,
                arterial_lanes: a.arterial_lanes,
                jitter: a.jitter,
                seed: a.seed,
                ..GridSpec::uniform(a.rows, a.cols, a.length, a.speed, a.lanes)
            };
            let net = spec.build()?;
            let mut w = output(a.out.as_deref())?;
            writeln!(w, "{}", net.to_json())?;
            w.flush()?;
        }
        Command::Stats { net } => {
            let net = load_network(&net)?;
            println!("{}", NetworkStats::CSV_HEADER);
            println!("{}", network_stats(&net).csv_row());
        }
        Command::Route {
            net,
            from,
            to,
            mode,
        } => {
            let net = load_network(&net)?;
            let route = shortest_route(&net, net.require_edge(&from)?, net.require_edge(&to)?, mode)?;
            let mut w = output(None)?;
            writeln!(w, "seq,edge,length_m,free_flow_s,cost")?;
            for (i, &e) in route.edges.iter().enumerate() {
                let edge = net.edge(e);
                writeln!(
                    w,
                    "{i},{},{},{},{}",
                    edge.id,
                    edge.length,
                    edge.free_flow_time(),
                    edge_cost(edge, mode)
                )?;
            }
            writeln!(
                w,
                "total,,{},{},{}",
                route.total_length,
                route.free_flow_time,
                route.cost(&net, mode)
            )?;
            w.flush()?;
        }
        Command::Demand {
            net,
            pop,
            cell,
            n,
            seed,
            out,
        } => {
            let net = load_network(&net)?;
            let vl = DEFAULT_VEHICLE_LENGTH;
            let trips = match pop {
                Some(p) => {
                    let f = File::open(&p).with_context(|| format!("opening {}", p.display()))?;
                    let grid = build_districts(&read_population_csv(f)?, &net, cell, vl)?;
                    sample_trips(&grid, &net, n, seed, vl)?
                }
                None => sample_uniform_trips(&net, n, seed, vl)?,
            };
            let mut w = output(out.as_deref())?;
            write_trips_csv(&net, &trips, &mut w)?;
            w.flush()?;
        }
        Command::Fleet {
            population,
            share,
            periods,
        } => {
            let f = compute_fleet_size(population, share, periods)?;
            println!("unrounded,rounded");
            println!("{},{}", f.unrounded, f.rounded);
        }
        Command::Baseline {
            study,
            setting,
            out,
            records,
        } => {
            let (cfg, ctx) = study.load()?;
            let setting = PreparedSetting::prepare(cfg.setting(&setting)?, &ctx.sim)?;
            if let Some(path) = records {
                let seed0 = seeds::SeedHasher::new(ctx.master_seed)
                    .str(&setting.label)
                    .str("baseline")
                    .finish();
                let recs = run_baselines(&setting, ctx.baseline_runs, seed0, &ctx)?;
                write_baseline_csv(&recs, create(&path)?)?;
            }
            let table = mine_setting_costs(&setting, &ctx)?;
            table.write_csv(create(&out)?)?;
        }
        Command::Run {
            study,
            setting,
            beta,
            seed_index,
            costs,
            out_dir,
            dump_occupancy,
        } => {
            let (cfg, ctx) = study.load()?;
            let setting = PreparedSetting::prepare(cfg.setting(&setting)?, &ctx.sim)?;
            let weights = Weights::new(ctx.optimizer.alpha, beta)?;
            let table = match costs {
                Some(p) => RouterCostTable::read_csv(
                    File::open(&p).with_context(|| format!("opening {}", p.display()))?,
                )?,
                None => mine_setting_costs(&setting, &ctx)?,
            };
            let beta_index = cfg
                .beta_sweep
                .betas
                .iter()
                .position(|&b| b == beta)
                .unwrap_or(0);
            let seeds = RunSeeds::for_cell(ctx.master_seed, &setting.label, beta_index, seed_index);
            let art = run_setting_detailed(&setting, weights, seeds, &table, &ctx, dump_occupancy)?;
            fs::create_dir_all(&out_dir)?;
            let net = &*setting.net;
            art.outcome
                .selections
                .write_csv(&art.plan_sets, create(&out_dir.join("selections.csv"))?)?;
            art.outcome.trace.write_csv(create(&out_dir.join("trace.csv"))?)?;
            art.sim.write_trip_csv(net, create(&out_dir.join("trips.csv"))?)?;
            write_plan_dump(net, &art.plan_sets, create(&out_dir.join("plans.csv"))?)?;
            if dump_occupancy {
                art.sim.write_occupancy_csv(net, create(&out_dir.join("occupancy.csv"))?)?;
            }
            SweepTable::new(vec![art.result]).write_csv(create(&out_dir.join("result.csv"))?)?;
        }
        Command::SweepBeta {
            study,
            setting,
            costs_dir,
            out,
            resume,
        } => {
            let (cfg, ctx) = study.load()?;
            let previous = if resume { read_existing(&out)? } else { Vec::new() };
            let labels: Vec<&str> = match &setting {
                Some(l) => vec![cfg.setting(l)?.label.as_str()],
                None => cfg.settings.iter().map(|s| s.label.as_str()).collect(),
            };
            if labels.is_empty() {
                bail!("config defines no settings");
            }
            let mut rows = Vec::new();
            for label in labels {
                let prepared = PreparedSetting::prepare(cfg.setting(label)?, &ctx.sim)?;
                let table = cost_table(&prepared, &ctx, costs_dir.as_deref())?;
                let sweep = beta_sweep(
                    &prepared,
                    &cfg.beta_sweep.betas,
                    cfg.beta_sweep.seeds,
                    &table,
                    &ctx,
                    &previous,
                );
                rows.extend(sweep.rows);
            }
            SweepTable::new(rows).write_csv(create(&out)?)?;
        }
        Command::SweepLoad {
            study,
            out,
            medians,
            resume,
        } => {
            let (cfg, ctx) = study.load()?;
            let Some(ls) = &cfg.load_sweep else {
                bail!("config has no load_sweep section");
            };
            let previous = if resume { read_existing(&out)? } else { Vec::new() };
            let base = PreparedSetting::prepare(cfg.setting(&ls.setting)?, &ctx.sim)?;
            let table = load_sweep(&base, ls, &ctx, &previous)?;
            table.write_csv(create(&out)?)?;
            if let Some(p) = medians {
                write_medians_csv(&table.medians(), create(&p)?)?;
            }
        }
        Command::Normalize { inputs, out, meta } => {
            let table = normalize_cross_setting(&read_tables(&inputs)?);
            table.write_csv(create(&out)?)?;
            if let (Some(p), Some(n)) = (meta, table.normalization) {
                let mut w = create(&p)?;
                serde_json::to_writer_pretty(&mut w, &n)?;
                writeln!(w)?;
                w.flush()?;
            }
        }
        Command::Report {
            inputs,
            out,
            medians,
        } => {
            let table = normalize_cross_setting(&read_tables(&inputs)?);
            let mut w = output(out.as_deref())?;
            write_report(&table, &mut w)?;
            w.flush()?;
            if let Some(p) = medians {
                write_medians_csv(&table.medians(), create(&p)?)?;
            }
        }
    }
    Ok(())
}

fn read_tables(paths: &[PathBuf]) -> Result<Vec<SweepTable>> {
    paths
        .iter()
        .map(|p| {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            SweepTable::read_csv(f).with_context(|| format!("reading {}", p.display()))
        })
        .collect()
}

fn cost_table(setting: &PreparedSetting, ctx: &RunContext, dir: Option<&Path>) -> Result<RouterCostTable> {
    let Some(dir) = dir else {
        return Ok(mine_setting_costs(setting, ctx)?);
    };
    let path = dir.join(format!("{}.costs.csv", setting.label));
    if path.exists() {
        let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        return Ok(RouterCostTable::read_csv(f)?);
    }
    let table = mine_setting_costs(setting, ctx)?;
    fs::create_dir_all(dir)?;
    table.write_csv(create(&path)?)?;
    Ok(table)
}
