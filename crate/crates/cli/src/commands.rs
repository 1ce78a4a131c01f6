use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{ensure, Context, Result};

use sumformer::baselines::{write_reports_csv, ForecastReport};
use sumformer::data::{convert_raw, read_grid_series, synth_generate, write_grid_series, SynthConfig};
use sumformer::embedding::GridSeries;
use sumformer::model::{read_checkpoint, write_checkpoint, Model};
use sumformer::train::{
    bench_issb, evaluate, evaluate_heuristic, fit_nlinear, train, write_attention_csv, write_bench_csv, Baseline,
    BenchConfig, Scenario, TrainConfig, TrainData, LOG_HEADER,
};
use sumformer::tvf::Mechanism;
use sumformer::ParamStore;

use crate::Command;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            config,
            overrides,
            sweep,
        } => train_cmd(&config, &overrides, sweep.as_deref()),
        Command::Eval {
            checkpoint,
            data,
            scenario,
            split,
            out,
        } => eval_cmd(&checkpoint, &data, &scenario, &split, out.as_deref()),
        Command::Synth {
            out,
            dims,
            steps_per_day,
            noise,
            seed,
        } => {
            let [steps, channels, height, width] = parse_dims(&dims)?;
            let series = synth_generate(&SynthConfig {
                steps,
                channels,
                height,
                width,
                steps_per_day,
                noise_sigma: noise,
                seed,
            })?;
            write_grid_series(&out, &series).with_context(|| format!("writing {}", out.display()))?;
            Ok(())
        }
        Command::Bench {
            mechanisms,
            g_sizes,
            repeats,
            d_model,
            dict_size,
            out,
        } => {
            let mechanisms = mechanisms
                .split(',')
                .map(str::parse::<Mechanism>)
                .collect::<Result<Vec<_>, _>>()?;
            let g_sizes = parse_list(&g_sizes, "g-sizes")?;
            let cfg = BenchConfig {
                d_model,
                g: dict_size,
                repeats,
                ..BenchConfig::default()
            };
            let rows = bench_issb(&mechanisms, &g_sizes, &cfg)?;
            write_bench_csv(output(out.as_deref())?, &rows)?;
            Ok(())
        }
        Command::Baseline {
            method,
            data,
            scenario,
            split,
            config,
            out,
        } => baseline_cmd(&method, &data, &scenario, &split, config.as_deref(), out.as_deref()),
        Command::ExportAttention {
            checkpoint,
            variable,
            out,
            data,
            start,
            layer,
            patch,
            split,
        } => {
            let (model, store) = load_checkpoint(&checkpoint)?;
            let cfg = config_for(&model, &split)?;
            let data = load_data(&data, &cfg)?;
            let start = start.or_else(|| data.test_starts.first().copied()).context("no test window")?;
            let window = data.normalized.window(start, cfg.model.input_len)?;
            let row = model.export_attention(&store, &window, variable, layer, patch)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_attention_csv(BufWriter::new(file), variable, &row)?;
            Ok(())
        }
        Command::Convert {
            input,
            out,
            dims,
            steps_per_day,
        } => {
            let raw = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let series = convert_raw(&raw, parse_dims(&dims)?, steps_per_day)?;
            write_grid_series(&out, &series).with_context(|| format!("writing {}", out.display()))?;
            Ok(())
        }
    }
}

fn parse_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| v.trim().parse().with_context(|| format!("{what}: cannot parse {v:?}")))
        .collect()
}

fn parse_dims(s: &str) -> Result<[usize; 4]> {
    let v = parse_list(s, "dims")?;
    v.try_into()
        .map_err(|v: Vec<usize>| anyhow::anyhow!("dims: expected T,C,H,W, got {} values", v.len()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_checkpoint(path: &Path) -> Result<(Model, ParamStore<f32>)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_checkpoint(io::BufReader::new(file)).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn config_for(model: &Model, split: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig {
        model: model.config().clone(),
        ..TrainConfig::default()
    };
    cfg.set("split", split)?;
    Ok(cfg)
}

fn load_data(path: &Path, cfg: &TrainConfig) -> Result<TrainData<f32>> {
    let series: GridSeries<f32> =
        read_grid_series(path).with_context(|| format!("reading series {}", path.display()))?;
    Ok(TrainData::new(series, cfg)?)
}

fn train_cmd(config: &Path, overrides: &[String], sweep: Option<&str>) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = TrainConfig::from_text(&text).with_context(|| format!("parsing {}", config.display()))?;
    for o in overrides {
        cfg.apply_override(o)?;
    }
    let Some(sweep) = sweep else {
        return train_one(&cfg);
    };
    let (key, values) = sweep.split_once('=').context("--sweep expects KEY=V1,V2,..")?;
    let base = cfg.out_dir.clone();
    for value in values.split(',') {
        let mut run = cfg.clone();
        run.set(key.trim(), value)?;
        run.out_dir = base.join(format!("{}={}", key.trim(), value.trim()));
        train_one(&run)?;
    }
    Ok(())
}

fn train_one(cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    let data = load_data(&cfg.dataset, cfg)?;
    eprintln!(
        "training {} on {} windows ({} val, {} test)",
        cfg.model.variant,
        data.train_starts.len(),
        data.val_starts.len(),
        data.test_starts.len()
    );
    let mut log = BufWriter::new(File::create(dir.join("log.csv"))?);
    writeln!(log, "{LOG_HEADER}")?;
    let mut log_err = None;
    let out = train(cfg, &data, &mut |epoch| {
        eprintln!(
            "epoch {:>3}  lr {:.2e}  train {:.5}  val {:.5}",
            epoch.epoch + 1,
            epoch.lr,
            epoch.train_mse,
            epoch.val_mse
        );
        if let Err(e) = writeln!(log, "{}", epoch.csv_row()).and_then(|_| log.flush()) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e).context("writing log.csv");
    }
    for (name, store) in [("best.ckpt", &out.fitted.best), ("final.ckpt", &out.fitted.last)] {
        let file = File::create(dir.join(name))?;
        write_checkpoint(BufWriter::new(file), &cfg.model, store)?;
    }
    let s = cfg.scenario();
    let variant = cfg.model.variant.name();
    let reports = [
        ForecastReport::new(format!("{variant}-best"), s.input_len, s.horizon, &out.test_best),
        ForecastReport::new(format!("{variant}-final"), s.input_len, s.horizon, &out.test_last),
    ];
    write_reports_csv(File::create(dir.join("metrics.csv"))?, &reports)?;
    eprintln!("best validation epoch {}", out.fitted.best_epoch + 1);
    write_reports_csv(io::stdout().lock(), &reports)?;
    Ok(())
}

fn eval_cmd(checkpoint: &Path, data: &Path, scenario: &str, split: &str, out: Option<&Path>) -> Result<()> {
    let (model, store) = load_checkpoint(checkpoint)?;
    let scenario: Scenario = scenario.parse()?;
    let cfg = config_for(&model, split)?;
    ensure!(
        scenario == cfg.scenario(),
        "scenario {scenario} does not match the checkpoint's {}",
        cfg.scenario()
    );
    let data = load_data(data, &cfg)?;
    let acc = evaluate(&model, &store, &data, &data.test_starts, cfg.batch_size)?;
    let report = ForecastReport::new(cfg.model.variant.name(), scenario.input_len, scenario.horizon, &acc);
    write_reports_csv(output(out)?, &[report])?;
    Ok(())
}

fn baseline_cmd(
    method: &str,
    data: &Path,
    scenario: &str,
    split: &str,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let method: Baseline = method.parse()?;
    let mut cfg = match config {
        Some(p) => TrainConfig::from_text(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => TrainConfig::default(),
    };
    cfg.set("scenario", scenario)?;
    cfg.set("split", split)?;
    let series = read_grid_series(data).with_context(|| format!("reading series {}", data.display()))?;
    let (_, c, h, w) = series.dims();
    (cfg.model.channels, cfg.model.height, cfg.model.width) = (c, h, w);
    let data = TrainData::new(series, &cfg)?;
    let acc = match method {
        Baseline::Nlinear => {
            let (model, fitted) = fit_nlinear(&cfg, &data, &mut |e| {
                eprintln!("epoch {:>3}  train {:.5}  val {:.5}", e.epoch + 1, e.train_mse, e.val_mse)
            })?;
            evaluate(&model, &fitted.best, &data, &data.test_starts, cfg.batch_size)?
        }
        heuristic => evaluate_heuristic(heuristic, &data, &data.test_starts)?,
    };
    let s = cfg.scenario();
    let report = ForecastReport::new(method.name(), s.input_len, s.horizon, &acc);
    write_reports_csv(output(out)?, &[report])?;
    Ok(())
}
