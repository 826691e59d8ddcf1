use std::path::{Path, PathBuf};

use serde_json::json;
use socnav_gnn::evaluation::evaluate;
use socnav_gnn::gnn::Model;
use socnav_gnn::graph::{build_graph, Graph, Variant};
use socnav_gnn::heatmap::{sweep, GridSpec};
use socnav_gnn::numeric::Rng;
use socnav_gnn::scenario::{
    generate_synthetic, parse_jsonl, parse_scenario, serialize_jsonl, Scenario, SynthConfig,
};
use socnav_gnn::training::{random_search, train, SearchOptions, SearchSpace, TrainConfig};

use crate::args::*;
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Graphize(a) => graphize(a),
        Command::Train(a) => train_cmd(a),
        Command::Search(a) => search(a),
        Command::Eval(a) => eval(a),
        Command::Score(a) => score(a),
        Command::Heatmap(a) => heatmap(a),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn with_path(path: &Path) -> impl FnOnce(CliError) -> CliError + '_ {
    move |e| e.with("path", path.display().to_string())
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&read(path)?)
        .map_err(|e| CliError::from(e).with("path", path.display().to_string()))
}

fn load_dataset(path: &Path, variant: Variant) -> Result<Vec<Graph>> {
    let scenarios = parse_jsonl(&read(path)?).map_err(|e| with_path(path)(e.into()))?;
    scenarios
        .iter()
        .enumerate()
        .map(|(i, s)| {
            build_graph(s, variant)
                .map_err(|e| with_path(path)(CliError::from(e)).with("sample", i))
        })
        .collect()
}

fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).map_err(|e| with_path(path)(e.into()))
}

fn pretty(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        min_humans: a.min_humans,
        max_humans: a.max_humans,
        min_objects: a.min_objects,
        max_objects: a.max_objects,
        min_room_side: a.min_room_side,
        max_room_side: a.max_room_side,
        interaction_prob: a.interaction_prob,
        ..SynthConfig::default()
    };
    let mut rng = Rng::new(a.seed);
    let scenarios = (0..a.count)
        .map(|i| {
            let mut s = generate_synthetic(rng.next_u64(), &cfg)
                .map_err(|e| CliError::from(e).with("sample", i))?;
            if a.unlabelled {
                s.label = None;
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    write(&a.out, serialize_jsonl(&scenarios))
}

fn graphize(a: GraphizeArgs) -> Result<()> {
    let g = build_graph(&load_scenario(&a.scenario)?, a.variant)?;
    let dump = pretty(&g.to_dump());
    match &a.out {
        Some(p) => write(p, dump)?,
        None => print!("{dump}"),
    }
    if let Some(p) = &a.dot {
        write(p, g.to_dot())?;
    }
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let variant = a.variant.unwrap_or(a.preset.default_variant());
    let cfg = TrainConfig {
        preset: a.preset,
        variant,
        epochs: a.epochs,
        patience: a.patience,
        batch_size: a.batch,
        hidden_units: a.hidden,
        attention_heads: a.heads,
        final_heads: a.final_heads,
        learning_rate: a.lr,
        weight_decay: a.wd,
        layers: a.layers,
        dropout: a.dropout,
        alpha: a.alpha,
        seed: a.seed,
    };
    cfg.validate()?;
    let train_set = load_dataset(&a.data, variant)?;
    let dev_set = load_dataset(&a.dev, variant)?;
    let (model, report) = train(&cfg, &train_set, &dev_set)?;
    model.save(&a.out)?;
    let report_path = a.report.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    write(&report_path, pretty(&report))
}

fn search(a: SearchArgs) -> Result<()> {
    let variant = a.variant.unwrap_or(a.preset.default_variant());
    let train_set = load_dataset(&a.data, variant)?;
    let dev_set = load_dataset(&a.dev, variant)?;
    let opts = SearchOptions {
        space: SearchSpace {
            epochs: a.epochs,
            patience: a.patience,
            ..SearchSpace::default()
        },
        jobs: a.jobs,
    };
    let results = random_search(
        a.sessions, a.seed, a.preset, variant, &train_set, &dev_set, &opts,
    )?;
    let ranked: Vec<_> = results
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut v = serde_json::to_value(r).expect("result serializes");
            v["rank"] = json!(i + 1);
            v
        })
        .collect();
    let doc = json!({
        "preset": a.preset.name(),
        "variant": variant.name(),
        "seed": a.seed,
        "sessions": a.sessions,
        "results": ranked,
    });
    write(&a.out, pretty(&doc))
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = load_dataset(&a.data, model.variant())?;
    let report = evaluate(&model, &data, a.bins)?;
    if let Some(p) = &a.histogram {
        write(p, report.histogram.to_csv())?;
    }
    let text = pretty(&report);
    match &a.out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn score(a: ScoreArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let g = build_graph(&load_scenario(&a.scenario)?, model.variant())?;
    println!("{}", model.score(&g)?);
    Ok(())
}

fn heatmap(a: HeatmapArgs) -> Result<()> {
    if a.csv.is_none() && a.pgm.is_none() {
        return Err(CliError::invalid("usage", "give --csv and/or --pgm"));
    }
    let model = load_model(&a.model)?;
    let base = load_scenario(&a.scenario)?;
    let room = GridSpec::for_room(&base);
    let grid = GridSpec {
        x_min: a.x_min.unwrap_or(room.x_min),
        x_max: a.x_max.unwrap_or(room.x_max),
        y_min: a.y_min.unwrap_or(room.y_min),
        y_max: a.y_max.unwrap_or(room.y_max),
        resolution: a.resolution,
        robot_theta: a.theta,
    };
    let grid = sweep(&model, &base, &grid, a.jobs)?;
    if let Some(p) = &a.csv {
        write(p, grid.to_csv(a.mask_outside))?;
    }
    if let Some(p) = &a.pgm {
        write(p, grid.to_pgm(a.mask_outside))?;
    }
    Ok(())
}
