use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use fxeffect::binning::BinningConfig;
use fxeffect::bridge::{self, BridgeMode, ExternalModelConfig, ExternalOracle};
use fxeffect::curve::{EffectCurve, Method};
use fxeffect::dataset::Dataset;
use fxeffect::method::MethodConfig;
use fxeffect::oracle::ModelOracle;
use fxeffect::regional::{detect_subspaces, regional_curve, render_report, PartitionTree, RegionalConfig};
use fxeffect::synthetic::{generate, SyntheticName, SyntheticSpec};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::args::{Cli, Command, EffectArgs, Format, RegionalArgs, ServeArgs, SyntheticArgs};
use crate::exit;
use crate::io::{dataset_csv, load_csv, write_atomic};

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Global(args) => cmd_global(&args),
        Command::Regional(args) => cmd_regional(&args),
        Command::Synthetic(args) => cmd_synthetic(&args),
        Command::Serve(args) => cmd_serve(&args),
    }
}

enum ModelSpec {
    Synthetic(SyntheticName),
    External(Vec<String>),
}

fn parse_model(spec: &str) -> Result<ModelSpec> {
    if let Some(name) = spec.strip_prefix("synthetic:") {
        return Ok(ModelSpec::Synthetic(name.parse()?));
    }
    if let Some(cmd) = spec.strip_prefix("external:") {
        let argv: Vec<String> = cmd.split_whitespace().map(str::to_owned).collect();
        if argv.is_empty() {
            return Err(exit::config("external model needs a command line"));
        }
        return Ok(ModelSpec::External(argv));
    }
    Err(exit::config(format!(
        "model must be synthetic:<name> or external:<command>, got {spec:?}"
    )))
}

fn parse_usize(field: &str, what: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| exit::config(format!("{what} must be a non-negative integer, got {field:?}")))
}

/// `fixed:K`, `greedy:I[:M]` or `dp:M[:min[:grid]]`.
pub fn parse_bins(spec: &str) -> Result<BinningConfig> {
    let parts: Vec<&str> = spec.split(':').collect();
    let cfg = match parts.as_slice() {
        ["fixed", k] => BinningConfig::fixed(parse_usize(k, "bin count")?),
        ["greedy", i] => BinningConfig::greedy(parse_usize(i, "micro-bin count")?, 10),
        ["greedy", i, m] => BinningConfig::greedy(parse_usize(i, "micro-bin count")?, parse_usize(m, "min points")?),
        ["dp", rest @ ..] if (1..=3).contains(&rest.len()) => {
            let min = rest.get(1).map_or(Ok(10), |m| parse_usize(m, "min points"))?;
            let mut cfg = BinningConfig::dynamic_programming(parse_usize(rest[0], "max bins")?, min);
            if let Some(g) = rest.get(2) {
                cfg.candidate_grid_size = parse_usize(g, "candidate grid")?;
            }
            cfg
        }
        _ => {
            return Err(exit::config(format!(
                "bins must be fixed:K, greedy:I[:M] or dp:M[:min[:grid]], got {spec:?}"
            )))
        }
    };
    Ok(cfg)
}

pub fn method_config(args: &EffectArgs) -> Result<MethodConfig> {
    let method: Method = args.method.into();
    let mut cfg = MethodConfig::default_for(method);
    let binned = matches!(method, Method::Ale | Method::Rhale);
    if args.bins.is_some() && !binned {
        return Err(exit::config(format!("--bins applies to ale and rhale, not {method}")));
    }
    if binned && (args.grid_size.is_some() || args.nof_instances.is_some()) {
        return Err(exit::config(format!(
            "--grid-size and --nof-instances do not apply to {method}"
        )));
    }
    if args.permutations.is_some() && method != Method::ShapDp {
        return Err(exit::config("--permutations applies to shapdp only"));
    }
    match &mut cfg {
        MethodConfig::Ale(b) | MethodConfig::Rhale(b) => {
            if let Some(spec) = &args.bins {
                *b = parse_bins(spec)?;
            }
        }
        MethodConfig::Pdp(p) | MethodConfig::DPdp(p) => {
            p.seed = args.seed;
            p.grid_size = args.grid_size.unwrap_or(p.grid_size);
            p.nof_instances = args.nof_instances.or(p.nof_instances);
        }
        MethodConfig::ShapDp(s) => {
            s.seed = args.seed;
            s.grid_size = args.grid_size.unwrap_or(s.grid_size);
            s.nof_instances = args.nof_instances.or(s.nof_instances);
            s.n_permutations = args.permutations.unwrap_or(s.n_permutations);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Data, model and the resolved settings shared by every output document.
struct Setup {
    dataset: Dataset,
    oracle: Box<dyn ModelOracle>,
    method: MethodConfig,
    features: Vec<usize>,
    config: Value,
}

fn setup(args: &EffectArgs, command: &str) -> Result<Setup> {
    let model = parse_model(&args.model)?;
    let method = method_config(args)?;
    let (dataset, data_source) = match (&args.data, &model) {
        (Some(path), _) => {
            let ds = load_csv(path, &args.categorical)?;
            (ds, json!({ "csv": path.display().to_string() }))
        }
        (None, ModelSpec::Synthetic(name)) => {
            if !args.categorical.is_empty() {
                return Err(exit::config("--categorical needs --data"));
            }
            let spec = SyntheticSpec {
                name: *name,
                n: args.n,
                seed: args.seed,
            };
            let (ds, _) = generate(&spec)?;
            (ds, json!({ "synthetic": spec }))
        }
        (None, ModelSpec::External(_)) => {
            return Err(exit::config("an external model needs --data"));
        }
    };
    let (oracle, model_json): (Box<dyn ModelOracle>, Value) = match model {
        ModelSpec::Synthetic(name) => {
            if dataset.n_cols() != 3 {
                return Err(exit::data(format!(
                    "synthetic model {name} takes 3 columns, data has {}",
                    dataset.n_cols()
                )));
            }
            (Box::new(name.oracle()), json!({ "synthetic": name }))
        }
        ModelSpec::External(command) => {
            let mut cfg = ExternalModelConfig::new(command);
            cfg.batch_size = args.batch_size;
            cfg.timeout_secs = args.timeout;
            if args.jacobian {
                cfg.mode = BridgeMode::PredictAndJacobian;
            }
            cfg.validate().map_err(|e| exit::config(e.to_string()))?;
            let json = serde_json::to_value(&cfg)?;
            (Box::new(ExternalOracle::spawn(cfg)?), json!({ "external": json }))
        }
    };
    let features = parse_features(&args.feature, dataset.n_cols())?;
    let config = json!({
        "command": command,
        "model": model_json,
        "data": data_source,
        "categorical": args.categorical,
        "method": method,
        "seed": args.seed,
    });
    Ok(Setup {
        dataset,
        oracle,
        method,
        features,
        config,
    })
}

fn parse_features(spec: &str, d: usize) -> Result<Vec<usize>> {
    if spec == "all" {
        return Ok((0..d).collect());
    }
    let s = parse_usize(spec, "feature")?;
    if s >= d {
        return Err(exit::config(format!("feature {s} out of range (data has {d} columns)")));
    }
    Ok(vec![s])
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn provenance(seed: u64, config: &Value) -> Value {
    let canonical = serde_json::to_string(config).expect("json value serializes");
    json!({
        "seed": seed,
        "config_hash": sha256_hex(canonical.as_bytes()),
        "config": config,
    })
}

fn with_fields(config: &Value, extra: &[(&str, Value)]) -> Value {
    let mut c = config.clone();
    let map = c.as_object_mut().expect("config is an object");
    for (k, v) in extra {
        map.insert((*k).to_owned(), v.clone());
    }
    c
}

pub fn curve_document(curve: &EffectCurve, name: &str, provenance: Value) -> Value {
    let mut doc = json!({
        "method": curve.method,
        "feature": curve.feature,
        "feature_name": name,
        "grid": curve.grid,
        "mean": curve.mean,
        "band": curve.band,
        "h_index": curve.h_index,
        "centering": curve.centering,
        "provenance": provenance,
    });
    if let Some(bins) = &curve.bins {
        doc["bins"] = serde_json::to_value(bins).expect("bins serialize");
    }
    doc
}

pub fn curve_csv(curve: &EffectCurve) -> String {
    let mut out = String::from("grid,mean,band\n");
    for (t, (g, m)) in curve.grid.iter().zip(&curve.mean).enumerate() {
        let band = curve.band.as_ref().map(|b| b[t].to_string()).unwrap_or_default();
        out.push_str(&format!("{g},{m},{band}\n"));
    }
    out
}

fn emit(out: Option<&Path>, file: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            write_atomic(&dir.join(file), text.as_bytes())
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn render_curve(curve: &EffectCurve, name: &str, prov: Value, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&curve_document(curve, name, prov)).expect("json");
            s.push('\n');
            s
        }
        Format::Csv => curve_csv(curve),
    }
}

fn extension(format: Format) -> &'static str {
    match format {
        Format::Json => "json",
        Format::Csv => "csv",
    }
}

fn stem(method: Method, feature: usize) -> String {
    format!("{}_feature{feature}", method.as_str().to_lowercase())
}

fn cmd_global(args: &EffectArgs) -> Result<()> {
    let run = setup(args, "global")?;
    let method = run.method.method();
    for &s in &run.features {
        let curve = run
            .method
            .effect(&run.dataset, run.oracle.as_ref(), s)
            .with_context(|| format!("{method} of feature {s}"))?;
        let config = with_fields(&run.config, &[("feature", json!(s))]);
        let text = render_curve(&curve, run.dataset.name(s), provenance(args.seed, &config), args.format);
        let file = format!("{}.{}", stem(method, s), extension(args.format));
        emit(args.out.as_deref(), &file, &text)?;
    }
    Ok(())
}

fn regional_config(args: &RegionalArgs, method: MethodConfig) -> Result<RegionalConfig> {
    let mut cfg = RegionalConfig::new(method);
    cfg.max_depth = args.max_depth;
    cfg.heter_pcg_drop_thres = args.heter_drop;
    cfg.nof_candidate_splits_for_numerical = args.candidates;
    cfg.min_cell_rows = args.min_cell_rows;
    cfg.validate()?;
    Ok(cfg)
}

fn tree_document(tree: &PartitionTree, provenance: Value) -> Value {
    json!({
        "feature": tree.feature,
        "names": tree.names,
        "nodes": tree.nodes,
        "level_stats": tree.level_stats,
        "diagnostics": tree.diagnostics,
        "provenance": provenance,
    })
}

fn cmd_regional(args: &RegionalArgs) -> Result<()> {
    let run = setup(&args.effect, "regional")?;
    let cfg = regional_config(args, run.method.clone())?;
    let method = run.method.method();
    let out = args.effect.out.as_deref();
    for &s in &run.features {
        let tree = detect_subspaces(&run.dataset, run.oracle.as_ref(), s, &cfg)
            .with_context(|| format!("regional {method} of feature {s}"))?;
        let config = with_fields(
            &run.config,
            &[("feature", json!(s)), ("regional", serde_json::to_value(&cfg)?)],
        );
        let prov = provenance(args.effect.seed, &config);
        let stem = format!("regional_{}", stem(method, s));
        emit(out, &format!("{stem}.txt"), &render_report(&tree))?;
        if out.is_some() {
            let doc = serde_json::to_string_pretty(&tree_document(&tree, prov.clone()))? + "\n";
            emit(out, &format!("{stem}_tree.json"), &doc)?;
        }
        for &idx in &args.node_idx {
            let curve = regional_curve(&tree, idx, &run.dataset, run.oracle.as_ref(), &cfg)
                .with_context(|| format!("curve of node {idx}, feature {s}"))?;
            let node_prov = provenance(
                args.effect.seed,
                &with_fields(&config, &[("node_idx", json!(idx))]),
            );
            let mut text = render_curve(&curve, run.dataset.name(s), node_prov, args.effect.format);
            if args.effect.format == Format::Json {
                let mut doc: Value = serde_json::from_str(&text)?;
                doc["node"] = serde_json::to_value(&tree.nodes[idx])?;
                text = serde_json::to_string_pretty(&doc)? + "\n";
            }
            let file = format!("{stem}_node{idx}.{}", extension(args.effect.format));
            emit(out, &file, &text)?;
        }
    }
    Ok(())
}

fn cmd_synthetic(args: &SyntheticArgs) -> Result<()> {
    let name: SyntheticName = args.name.parse()?;
    let (ds, _) = generate(&SyntheticSpec {
        name,
        n: args.n,
        seed: args.seed,
    })?;
    let text = dataset_csv(&ds);
    match &args.out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => emit(None, "", &text),
    }
}

fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let ModelSpec::Synthetic(name) = parse_model(&args.model)? else {
        return Err(exit::config("serve takes a synthetic:<name> model"));
    };
    let oracle = if args.without_gradient {
        name.oracle().without_gradient()
    } else {
        name.oracle()
    };
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    bridge::serve(stdin, stdout, &oracle)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::MethodArg;
    use clap::Parser;
    use fxeffect::binning::BinningMode;

    #[test]
    fn bins_grammar() {
        assert_eq!(parse_bins("fixed:11").unwrap(), BinningConfig::fixed(11));
        assert_eq!(parse_bins("greedy:50").unwrap(), BinningConfig::greedy(50, 10));
        let dp = parse_bins("dp:20:5:80").unwrap();
        assert_eq!(dp.mode, BinningMode::DynamicProgramming);
        assert_eq!((dp.max_nof_bins, dp.min_points_per_bin, dp.candidate_grid_size), (20, 5, 80));
        for bad in ["fixed", "fixed:x", "dp", "dp:1:2:3:4", "quantile:4"] {
            assert_eq!(exit::classify(&parse_bins(bad).unwrap_err()), exit::ExitKind::Config, "{bad}");
        }
    }

    fn effect_args(extra: &[&str]) -> EffectArgs {
        let mut argv = vec!["fxeffect", "global", "--model", "synthetic:correlated_trio"];
        argv.extend_from_slice(extra);
        match Cli::parse_from(argv).command {
            Command::Global(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn method_flag_consistency() {
        let a = effect_args(&["--method", "ale", "--bins", "dp:10"]);
        assert_eq!(exit::classify(&method_config(&a).unwrap_err()), exit::ExitKind::Config);
        let a = effect_args(&["--method", "pdp", "--bins", "fixed:3"]);
        assert!(method_config(&a).is_err());
        let a = effect_args(&["--method", "shapdp", "--seed", "4", "--permutations", "7"]);
        assert_eq!(a.method, MethodArg::Shapdp);
        let MethodConfig::ShapDp(s) = method_config(&a).unwrap() else { panic!() };
        assert_eq!((s.seed, s.n_permutations), (4, 7));
    }

    #[test]
    fn features() {
        assert_eq!(parse_features("all", 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_features("2", 3).unwrap(), vec![2]);
        assert!(parse_features("3", 3).is_err());
        assert!(parse_features("x1", 3).is_err());
    }

    #[test]
    fn hash_is_stable() {
        let c = json!({"a": 1, "b": [1.5, 2.0]});
        assert_eq!(provenance(3, &c)["config_hash"], provenance(3, &c)["config_hash"]);
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
