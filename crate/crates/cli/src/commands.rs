use std::path::Path;

use lnme_core::cut::{exact_lopsided_cut, CutError, CutExport};
use lnme_core::doublespend::mean_capacity;
use lnme_core::graph::GraphError;
use lnme_core::mempool::{default_band_edges, MempoolError};
use lnme_core::*;
use serde::Serialize;

use crate::manifest::Run;
use crate::*;

/// Satoshis as BTC with exactly 8 decimals.
pub fn btc(sat: i64) -> String {
    let sign = if sat < 0 { "-" } else { "" };
    let abs = sat.unsigned_abs();
    format!("{sign}{}.{:08}", abs / 100_000_000, abs % 100_000_000)
}

fn graph_err(e: GraphError) -> Failure {
    Failure::Data(e.to_string())
}

fn cut_err(e: CutError) -> Failure {
    match e {
        CutError::KOutOfRange { .. } => Failure::Usage(e.to_string()),
        e => Failure::Data(e.to_string()),
    }
}

fn mempool_err(e: MempoolError) -> Failure {
    Failure::Data(e.to_string())
}

fn sim_err(e: SimError) -> Failure {
    match e {
        SimError::Param(_) | SimError::Strategy(_) => Failure::Usage(e.to_string()),
        SimError::Cut(c) => cut_err(c),
        e => Failure::Data(e.to_string()),
    }
}

fn load_graph(input: &GraphInput, run: &mut Run) -> Result<LnGraph, Failure> {
    let text = run.read_input(&input.graph)?;
    let lnd = match input.format {
        GraphFormat::Lnd => true,
        GraphFormat::Csv => false,
        GraphFormat::Auto => input
            .graph
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json")),
    };
    if lnd {
        parse_lnd_graph(&text).map_err(graph_err)
    } else {
        parse_edge_list(&text).map_err(graph_err)
    }
}

fn load_cut(path: &Path, run: &mut Run) -> Result<CutExport, Failure> {
    let text = run.read_input(path)?;
    CutExport::from_json(&text).map_err(cut_err)
}

fn load_world(args: &ScenarioArgs, run: &mut Run) -> Result<(MempoolTimeline, BlockTrace), Failure> {
    let timeline = MempoolTimeline::from_csv(&run.read_input(&args.timeline)?).map_err(mempool_err)?;
    let blocks = BlockTrace::from_csv(&run.read_input(&args.blocks)?).map_err(mempool_err)?;
    Ok((timeline, blocks))
}

fn scenario<'a>(
    args: &ScenarioArgs,
    timeline: &'a MempoolTimeline,
    blocks: &'a BlockTrace,
) -> Result<Scenario<'a>, Failure> {
    if args.start.is_some() && args.scenario != ScenarioKind::Custom {
        return Err(Failure::Usage("--start applies to --scenario custom only".into()));
    }
    let sc = match args.scenario {
        ScenarioKind::One => {
            if args.avg_block_txs.is_some() {
                return Err(Failure::Usage("scenario 1 uses historical block sizes; drop --avg-block-txs".into()));
            }
            Scenario::preset_1(timeline, blocks)
        }
        ScenarioKind::Two => {
            let avg = args
                .avg_block_txs
                .ok_or_else(|| Failure::Usage("scenario 2 needs --avg-block-txs (scenario-1 average block size)".into()))?;
            Scenario::preset_2(timeline, blocks, avg)
        }
        ScenarioKind::Custom => {
            let mode = match args.avg_block_txs {
                Some(avg) => BlockCapacityMode::ConstantAverage(avg),
                None => BlockCapacityMode::Historical,
            };
            Scenario::new(timeline, blocks, mode, args.start.unwrap_or(timeline.first_timestamp()))
        }
    };
    sc.horizon().map_err(sim_err)?;
    Ok(sc)
}

#[derive(Serialize)]
struct CutReport<'a> {
    method: &'a str,
    #[serde(flatten)]
    cut: CutExport,
    value: u64,
    cut_capacity_btc: String,
}

fn write_cut(run: &mut Run, graph: &LnGraph, cut: &Cut, method: &str) -> Result<(), Failure> {
    let report = CutReport {
        method,
        cut: cut.export(graph),
        value: cut.value(),
        cut_capacity_btc: btc(cut.cut_capacity as i64),
    };
    run.write_json("cut.json", report)
}

fn trace_csv(graph: &LnGraph, trace: &GreedyTrace) -> String {
    let mut out = String::from("step,node,gain,edge_count,cut_capacity_sat,cut_capacity_btc\n");
    for s in &trace.steps {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.step,
            csv_field(graph.label(s.node)),
            s.gain,
            s.edge_count,
            s.cut_capacity,
            btc(s.cut_capacity as i64)
        ));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn solve(args: &SolveArgs, run: &mut Run) -> Result<Completion, Failure> {
    let graph = load_graph(&args.input, run)?;
    if let Some(k_max) = args.k_max {
        let curve = value_vs_k_curve(&graph, k_max, args.objective).map_err(cut_err)?;
        let mut csv = String::from("k,edge_count,cut_capacity_sat,cut_capacity_btc\n");
        for p in &curve {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                p.k,
                p.edge_count,
                p.cut_capacity,
                btc(p.cut_capacity as i64)
            ));
        }
        run.write("curve.csv", &csv)?;
    }
    let k = args.k.or(args.k_max).expect("clap requires k or k_max");
    let (greedy, trace) = greedy_lopsided_cut(&graph, k, args.objective).map_err(cut_err)?;
    if args.exact {
        match exact_lopsided_cut(&graph, k, args.objective) {
            Ok(cut) => {
                write_cut(run, &graph, &cut, "exact")?;
                return Ok(Completion::Done);
            }
            Err(CutError::BudgetExceeded { .. }) => {
                write_cut(run, &graph, &greedy, "greedy")?;
                run.write("trace.csv", &trace_csv(&graph, &trace))?;
                return Ok(Completion::Exhausted(
                    "enumeration budget exceeded; wrote the greedy cut instead".into(),
                ));
            }
            Err(e) => return Err(cut_err(e)),
        }
    }
    write_cut(run, &graph, &greedy, "greedy")?;
    run.write("trace.csv", &trace_csv(&graph, &trace))?;
    Ok(Completion::Done)
}

fn zombie_strategies(args: &ZombieArgs) -> Result<Vec<FeeStrategy>, Failure> {
    let mut fees: Vec<FeeRate> = args.fee.into_iter().chain(args.initial_fee).collect();
    fees.extend(&args.fees);
    if fees.is_empty() {
        return Err(Failure::Usage(if args.dynamic {
            "--dynamic needs --initial-fee or --fees".into()
        } else {
            "one of --fee or --fees is required".into()
        }));
    }
    if !args.dynamic {
        return Ok(fees.into_iter().map(|fee| FeeStrategy::Static { fee }).collect());
    }
    if args.step.is_empty() || args.beta.is_empty() {
        return Err(Failure::Usage("--dynamic needs --step and --beta".into()));
    }
    let mut out = Vec::new();
    for &initial_fee in &fees {
        for &step in &args.step {
            for &beta in &args.beta {
                out.push(
                    FeeStrategy::Dynamic { initial_fee, step, beta }
                        .validate()
                        .map_err(sim_err)?,
                );
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct ZombieRunReport {
    channels: u64,
    strategy: FeeStrategy,
    blocks_to_close_all: u64,
    horizon_exhausted: bool,
    remaining: u64,
    first_height: Option<u64>,
    last_height: Option<u64>,
}

pub fn zombie(args: &ZombieArgs, run: &mut Run) -> Result<Completion, Failure> {
    let channels = match (&args.source.channels, &args.source.cut_file) {
        (Some(n), _) => *n,
        (None, Some(path)) => load_cut(path, run)?.cut_channels.len() as u64,
        (None, None) => unreachable!("clap requires a channel source"),
    };
    let strategies = zombie_strategies(args)?;
    let (timeline, blocks) = load_world(&args.scenario, run)?;
    let sc = scenario(&args.scenario, &timeline, &blocks)?;
    let configs: Vec<ZombieConfig> = strategies.iter().map(|&s| ZombieConfig::new(channels, s)).collect();
    if let [config] = configs.as_slice() {
        let report = simulate_zombie(config, &sc).map_err(sim_err)?;
        run.write("zombie_series.csv", &report.series_csv())?;
        run.write_json(
            "zombie_report.json",
            ZombieRunReport {
                channels,
                strategy: config.strategy,
                blocks_to_close_all: report.blocks_to_close_all,
                horizon_exhausted: report.horizon_exhausted,
                remaining: report.remaining(),
                first_height: report.series.first().map(|s| s.0),
                last_height: report.series.last().map(|s| s.0),
            },
        )?;
        if report.horizon_exhausted {
            return Ok(Completion::Exhausted(format!(
                "horizon ended with {} of {channels} channels still open",
                report.remaining()
            )));
        }
        return Ok(Completion::Done);
    }
    let rows = sweep_zombie(&configs, &sc).map_err(sim_err)?;
    run.write("zombie_sweep.csv", &zombie::sweep_csv(&rows))?;
    let exhausted = rows.iter().filter(|r| r.horizon_exhausted).count();
    if exhausted > 0 {
        return Ok(Completion::Exhausted(format!(
            "{exhausted} of {} sweep runs hit the end of the horizon",
            rows.len()
        )));
    }
    Ok(Completion::Done)
}

fn parse_delay(s: &str) -> Result<DelayPolicy, Failure> {
    if s == "scaled" {
        return Ok(DelayPolicy::scaled_default());
    }
    s.strip_prefix("fixed:")
        .and_then(|n| n.parse().ok())
        .map(|blocks| DelayPolicy::Fixed { blocks })
        .ok_or_else(|| Failure::Usage(format!("--delay {s}: expected fixed:<blocks> or scaled")))
}

fn attack_config(args: &AttackArgs) -> Result<DoubleSpendConfig, Failure> {
    let sweep = if args.sweep_dynamic {
        FeeStrategy::Dynamic {
            initial_fee: args.sweep_initial_fee,
            step: args.sweep_step,
            beta: args.sweep_beta,
        }
    } else {
        FeeStrategy::Static {
            fee: args.sweep_fee.unwrap_or(args.sweep_initial_fee),
        }
    };
    let honest = match args.honest_step {
        Some(step) => PenaltyStrategy::Dynamic {
            step,
            beta: args.honest_beta,
        },
        None => PenaltyStrategy::Static,
    };
    Ok(DoubleSpendConfig {
        honest,
        attacker: AttackerStrategy {
            commitment_fee: args.attacker_fee,
            sweep: sweep.validate().map_err(sim_err)?,
        },
        delay: parse_delay(&args.delay)?,
        strict_expiry: args.strict_expiry,
    })
}

#[derive(Serialize)]
struct DoubleSpendRunReport<'a> {
    attacked: u64,
    compromised: u64,
    defended: u64,
    undecided: u64,
    blocks_replayed: u64,
    realized_profit_sat: i64,
    realized_profit_btc: String,
    profit_mode: ProfitMode,
    config: DoubleSpendConfig,
    per_channel: &'a [lnme_core::doublespend::ChannelRecord],
}

pub fn doublespend(args: &DoubleSpendArgs, run: &mut Run) -> Result<Completion, Failure> {
    let cut = load_cut(&args.cut_file, run)?;
    let channels = AttackedChannel::from_cut_export(&cut);
    let config = attack_config(&args.attack)?;
    let (timeline, blocks) = load_world(&args.attack.scenario, run)?;
    let sc = scenario(&args.attack.scenario, &timeline, &blocks)?;
    let report = simulate_double_spend(&channels, &config, &sc).map_err(sim_err)?;
    let mode = match args.profit_mode {
        ProfitModeArg::PerChannel => {
            if args.avg_capacity.is_some() {
                return Err(Failure::Usage("--avg-capacity needs --profit-mode average".into()));
            }
            ProfitMode::PerChannel
        }
        ProfitModeArg::Average => ProfitMode::AverageCapacity(args.avg_capacity.unwrap_or(mean_capacity(&channels))),
    };
    let profit = realized_profit(&report, mode, true).map_err(sim_err)?;
    run.write("ds_series.csv", &report.series_csv())?;
    run.write_json(
        "ds_report.json",
        DoubleSpendRunReport {
            attacked: report.attacked,
            compromised: report.compromised,
            defended: report.defended,
            undecided: report.undecided,
            blocks_replayed: report.blocks_replayed,
            realized_profit_sat: profit,
            realized_profit_btc: btc(profit),
            profit_mode: mode,
            config,
            per_channel: &report.per_channel,
        },
    )?;
    if report.undecided > 0 {
        return Ok(Completion::Exhausted(format!(
            "{} of {} channels undecided at the end of the horizon; excluded from profit",
            report.undecided, report.attacked
        )));
    }
    Ok(Completion::Done)
}

pub fn profit_vs_k(args: &ProfitVsKArgs, run: &mut Run) -> Result<Completion, Failure> {
    let graph = load_graph(&args.input, run)?;
    let config = attack_config(&args.attack)?;
    let (timeline, blocks) = load_world(&args.attack.scenario, run)?;
    let sc = scenario(&args.attack.scenario, &timeline, &blocks)?;
    let rows = lnme_core::profit_vs_k(&graph, &args.ks, &config, &sc).map_err(sim_err)?;
    let mut csv = String::from(
        "k,attacked,compromised,defended,undecided,cut_capacity_sat,cut_capacity_btc,\
         profit_per_channel_sat,profit_per_channel_btc,profit_average_sat,profit_average_btc\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.k,
            r.attacked,
            r.compromised,
            r.defended,
            r.undecided,
            r.cut_capacity_sat,
            btc(r.cut_capacity_sat as i64),
            r.profit_per_channel_sat,
            btc(r.profit_per_channel_sat),
            r.profit_average_sat,
            btc(r.profit_average_sat)
        ));
    }
    run.write("profit_vs_k.csv", &csv)?;
    let undecided: u64 = rows.iter().map(|r| r.undecided).sum();
    if undecided > 0 {
        return Ok(Completion::Exhausted(format!(
            "{undecided} channels undecided across the sweep; excluded from profit"
        )));
    }
    Ok(Completion::Done)
}

pub fn gen_graph(args: &GenGraphArgs, run: &mut Run) -> Result<Completion, Failure> {
    let sampler = match &args.capacity_range {
        Some(range) => {
            let (lo, hi) = range
                .split_once(':')
                .and_then(|(lo, hi)| Some((lo.parse().ok()?, hi.parse().ok()?)))
                .ok_or_else(|| Failure::Usage(format!("--capacity-range {range}: expected lo:hi")))?;
            CapacitySampler::Uniform { lo, hi }
        }
        None => CapacitySampler::Constant(args.capacity),
    };
    run.seed(args.seed);
    let graph = generate_scale_free(args.n, args.m, args.seed, sampler).map_err(|e| Failure::Usage(e.to_string()))?;
    run.write("graph.csv", &graph.to_edge_list())?;
    Ok(Completion::Done)
}

pub fn gen_timeline(args: &GenTimelineArgs, run: &mut Run) -> Result<Completion, Failure> {
    let edges = if args.bands.is_empty() {
        default_band_edges()
    } else {
        args.bands.clone()
    };
    let counts = match args.count.as_slice() {
        [c] => vec![*c; edges.len()],
        cs if cs.len() == edges.len() => cs.to_vec(),
        cs => {
            return Err(Failure::Usage(format!(
                "--count has {} values for {} bands",
                cs.len(),
                edges.len()
            )))
        }
    };
    if args.end < args.start || args.cadence < 1 {
        return Err(Failure::Usage("need --end >= --start and --cadence >= 1".into()));
    }
    let timeline = MempoolTimeline::constant(edges, counts, args.start, args.end, args.cadence)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    run.write("timeline.csv", &timeline.to_csv())?;
    Ok(Completion::Done)
}

pub fn gen_blocks(args: &GenBlocksArgs, run: &mut Run) -> Result<Completion, Failure> {
    if args.count == 0 {
        return Err(Failure::Usage("--count must be positive".into()));
    }
    let trace = BlockTrace::synthetic(args.start_height, args.start_time, args.count, args.txs, args.interval)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    run.write("blocks.csv", &trace.to_csv())?;
    Ok(Completion::Done)
}
