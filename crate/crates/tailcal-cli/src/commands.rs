//! Subcommand implementations. Every command is a pure function of its
//! config, input files, and seed; artifacts land under the configured
//! output directory and reruns rewrite them byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tailcal::gaussian::{entries_to_stats, stats_to_entries, ClassStatsEntry};
use tailcal::*;

use crate::config::PipelineConfig;
use crate::CliFailure;

type CmdResult<T> = std::result::Result<T, CliFailure>;

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliFailure::validation(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CmdResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CmdResult<T> {
    if !path.exists() {
        return Err(CliFailure::missing(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliFailure::validation(format!("{}: {e}", path.display())))
}

fn load_split(cfg: &PipelineConfig, which: &str) -> CmdResult<LabeledEmbeddingSet> {
    let manifest = cfg.require_manifest(which)?;
    Ok(load_set(manifest, cfg.format)?)
}

fn stats_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.out.join("stats.json")
}

fn partition_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.out.join("partition.json")
}

fn fit_path(cfg: &PipelineConfig, method: Method) -> PathBuf {
    cfg.out.join(format!("fit_{method}.json"))
}

fn load_artifacts(
    cfg: &PipelineConfig,
) -> CmdResult<(BTreeMap<usize, ClassGaussian>, HeadTailPartition)> {
    let entries: Vec<ClassStatsEntry> = read_json(&stats_path(cfg))?;
    let stats = entries_to_stats(&entries)?;
    let part: HeadTailPartition = read_json(&partition_path(cfg))?;
    Ok((stats, part))
}

// --- synth ------------------------------------------------------------

pub struct SynthOpts {
    pub classes: usize,
    pub dim: usize,
    pub imbalance: f64,
    pub max_count: u64,
    pub gamma: f64,
    pub prior_bias: bool,
    pub test_per_class: u64,
}

pub fn cmd_synth(cfg: &PipelineConfig, opts: &SynthOpts) -> CmdResult<()> {
    let spec = SyntheticSpec {
        num_classes: opts.classes,
        feature_dim: opts.dim,
        imbalance_factor: opts.imbalance,
        max_count: opts.max_count,
        overconfidence_scale: opts.gamma,
        prior_bias: opts.prior_bias,
        seed: cfg.seed,
        test_per_class: opts.test_per_class,
    };
    let (train, val, test) = generate_synthetic(&spec)?;
    for (name, set) in [("train", &train), ("val", &val), ("test", &test)] {
        let manifest = save_set(&cfg.out.join(name), set, cfg.format)?;
        println!(
            "{name}: {} samples, counts {:?} -> {}",
            set.len(),
            set.class_counts(),
            manifest.display()
        );
    }
    write_json(&cfg.out.join("synth_spec.json"), &spec)?;
    Ok(())
}

// --- fit --------------------------------------------------------------

pub fn cmd_fit(cfg: &PipelineConfig) -> CmdResult<()> {
    let train = load_split(cfg, "train")?;
    let stats = fit_class_gaussians(&train)?;
    let part = partition(train.class_counts(), cfg.zeta)?;
    write_json(&stats_path(cfg), &stats_to_entries(&stats))?;
    write_json(&partition_path(cfg), &part)?;
    println!("class counts:");
    for (class, &count) in train.class_counts().iter().enumerate() {
        let side = if part.is_head(class) { "head" } else { "tail" };
        println!("  class {class}: {count} ({side})");
    }
    println!(
        "fitted {} class statistics; head {:?}, tail {:?}",
        train.num_classes(),
        part.head,
        part.tail
    );
    Ok(())
}

// --- calibrate ----------------------------------------------------------

pub fn cmd_calibrate(cfg: &PipelineConfig) -> CmdResult<()> {
    let (stats, part) = load_artifacts(cfg)?;
    let val = load_split(cfg, "val")?;
    if val.num_classes() != stats.len() {
        return Err(CliFailure::validation(format!(
            "validation split has {} classes but statistics cover {}",
            val.num_classes(),
            stats.len()
        )));
    }

    let plan = TransferPlan::build(&stats, &part, cfg.alpha, cfg.strategy)?;
    let weights = importance_weights(&val, &stats, &plan, &part, cfg.eta1, cfg.eta2)?;
    write_json(&cfg.out.join("plan.json"), &plan)?;
    write_json(&cfg.out.join("weights.json"), &weights)?;
    let hist = weight_histogram(&weights, cfg.bins)?;
    write_text(&cfg.out.join("weight_histogram.csv"), &hist.to_csv())?;

    let ones = vec![1.0; val.len()];
    let bounds = (cfg.tmin, cfg.tmax);

    let base = TemperatureFit {
        temperature: 1.0,
        objective_value: weighted_nll(val.logits().view(), val.labels(), &ones, 1.0)?,
        method: Method::Base,
        search_trace: vec![(
            1.0,
            weighted_nll(val.logits().view(), val.labels(), &ones, 1.0)?,
        )],
    };
    let plain = fit_temperature(
        val.logits().view(),
        val.labels(),
        &ones,
        bounds,
        Method::PlainTs,
    )?;
    let weighted = fit_temperature(
        val.logits().view(),
        val.labels(),
        &weights.weights,
        bounds,
        Method::WeightedTs,
    )?;

    for fit in [&base, &plain, &weighted] {
        write_json(&fit_path(cfg, fit.method), fit)?;
        println!(
            "{}: T = {:.6}, objective = {:.6}",
            fit.method, fit.temperature, fit.objective_value
        );
    }
    Ok(())
}

// --- evaluate -----------------------------------------------------------

pub fn cmd_evaluate(cfg: &PipelineConfig, methods: &[Method]) -> CmdResult<()> {
    let (stats, _) = load_artifacts(cfg)?;
    let test = load_split(cfg, "test")?;
    if test.num_classes() != stats.len() {
        return Err(CliFailure::validation(format!(
            "test split has {} classes but statistics cover {}",
            test.num_classes(),
            stats.len()
        )));
    }
    for &method in methods {
        let fit: TemperatureFit = read_json(&fit_path(cfg, method))?;
        let probs = apply_temperature(test.logits().view(), fit.temperature)?;
        let report = metric_report(probs.view(), test.labels(), cfg.bins, cfg.ranges)?;
        write_json(&cfg.out.join(format!("metrics_{method}.json")), &report)?;
        let table = reliability_table(probs.view(), test.labels(), cfg.bins, BinScheme::EqualWidth)?;
        write_text(
            &cfg.out.join(format!("reliability_{method}.csv")),
            &table.to_csv(),
        )?;
        println!(
            "{method}: T = {:.6}, ECE = {:.6}, SCE = {:.6}, ACE = {:.6}, accuracy = {:.6}",
            fit.temperature, report.ece, report.sce, report.ace, report.accuracy
        );
    }
    Ok(())
}

// --- diagram ------------------------------------------------------------

pub fn cmd_diagram(
    cfg: &PipelineConfig,
    method: Method,
    scheme: BinScheme,
) -> CmdResult<()> {
    let test = load_split(cfg, "test")?;
    let fit: TemperatureFit = read_json(&fit_path(cfg, method))?;
    let probs = apply_temperature(test.logits().view(), fit.temperature)?;
    let table = reliability_table(probs.view(), test.labels(), cfg.bins, scheme)?;
    let path = cfg.out.join(format!("diagram_{method}_{scheme}.csv"));
    write_text(&path, &table.to_csv())?;
    println!("wrote {}", path.display());
    Ok(())
}

// --- sweep-alpha ----------------------------------------------------------

pub fn cmd_sweep_alpha(cfg: &PipelineConfig, alphas: &[f64]) -> CmdResult<()> {
    if alphas.len() < 2 {
        return Err(CliFailure::validation(
            "need at least two alpha values to sweep",
        ));
    }
    for &a in alphas {
        if !(0.0..=1.0).contains(&a) {
            return Err(CliFailure::validation(format!(
                "alpha values must lie in [0, 1], got {a}"
            )));
        }
    }
    let train = load_split(cfg, "train")?;
    let val = load_split(cfg, "val")?;
    let test = load_split(cfg, "test")?;
    let stats = fit_class_gaussians(&train)?;
    let part = partition(train.class_counts(), cfg.zeta)?;

    let mut sorted: Vec<f64> = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let mut rows = String::from("alpha,temperature,test_ece\n");
    for &alpha in &sorted {
        let plan = TransferPlan::build(&stats, &part, alpha, cfg.strategy)?;
        let weights = importance_weights(&val, &stats, &plan, &part, cfg.eta1, cfg.eta2)?;
        let fit = fit_temperature(
            val.logits().view(),
            val.labels(),
            &weights.weights,
            (cfg.tmin, cfg.tmax),
            Method::WeightedTs,
        )?;
        let probs = apply_temperature(test.logits().view(), fit.temperature)?;
        let e = ece(probs.view(), test.labels(), cfg.bins)?;
        rows.push_str(&format!("{alpha},{},{e}\n", fit.temperature));
        println!("alpha = {alpha}: T = {:.6}, test ECE = {e:.6}", fit.temperature);
    }
    write_text(&cfg.out.join("sweep_alpha.csv"), &rows)?;
    Ok(())
}

// --- verify-theory ----------------------------------------------------------

pub fn cmd_verify_theory(
    cfg: &PipelineConfig,
    samples: u64,
    cases: u64,
) -> CmdResult<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut violations = 0usize;
    println!("{:<14} {:>12} {:>12} {:>12} {:>12}  verdict", "case", "epsilon", "lower", "upper", "stderr");

    let report = |name: &str, check: &BoundCheck, ok: bool, violations: &mut usize| {
        if !ok {
            *violations += 1;
        }
        println!(
            "{:<14} {:>12.6} {:>12.6} {:>12.6} {:>12.2e}  {}",
            name,
            check.epsilon,
            check.lower,
            check.upper,
            check.mc_stderr,
            if ok { "ok" } else { "VIOLATION" }
        );
    };

    // Exact-zero case: q = q*.
    let p = ClassGaussian::new(vec![0.0], vec![1.0], 1)?;
    let q = ClassGaussian::new(vec![0.4], vec![0.95], 1)?;
    let same = check_bound(&p, &q, &q, samples, cfg.seed)?;
    report(
        "exact-zero",
        &same,
        same.epsilon == 0.0 && same.lower == 0.0,
        &mut violations,
    );

    // Identity case: q* = p, epsilon = d2(q||p) - 1.
    let ident = check_bound(&p, &q, &p, samples, cfg.seed.wrapping_add(1))?;
    let d2 = renyi_d2(&q, &p)?
        .finite()
        .expect("fixed case is convergent");
    let ok = (ident.epsilon - (d2 - 1.0)).abs() <= 4.0 * ident.mc_stderr && ident.holds(3.0);
    report("identity", &ident, ok, &mut violations);

    for case in 0..cases {
        let sd_p: f64 = 0.85 + 0.4 * rng.random::<f64>();
        let draw = |rng: &mut ChaCha8Rng| -> tailcal::Result<ClassGaussian> {
            ClassGaussian::new(
                vec![-0.8 + 1.6 * rng.random::<f64>()],
                vec![sd_p * (0.7 + 0.35 * rng.random::<f64>())],
                1,
            )
        };
        let q = draw(&mut rng)?;
        let q_star = draw(&mut rng)?;
        let p = ClassGaussian::new(vec![0.0], vec![sd_p], 1)?;
        let check = check_bound(&p, &q, &q_star, samples, cfg.seed.wrapping_add(100 + case))?;
        report(
            &format!("triple-{case:02}"),
            &check,
            check.holds(3.0),
            &mut violations,
        );
    }

    // Crossover battery: the closed form must be a unit-ratio point and
    // split the axis into the documented sign pattern.
    let mut crossover_bad = 0usize;
    for _ in 0..50 {
        let mu_a = -2.0 + 4.0 * rng.random::<f64>();
        let mu_b = -2.0 + 4.0 * rng.random::<f64>();
        let sd_a = 0.5 + 0.7 * rng.random::<f64>();
        let sd_b = sd_a * (1.15 + 1.35 * rng.random::<f64>());
        let p = ClassGaussian::new(vec![mu_a], vec![sd_a], 1)?;
        let q = ClassGaussian::new(vec![mu_b], vec![sd_b], 1)?;
        let (t1, t2) = crossover_points(&p, &q)?;
        for t in [t1, t2] {
            let w = (q.log_density(&[t])? - p.log_density(&[t])?).exp();
            if (w - 1.0).abs() >= 1e-9 {
                crossover_bad += 1;
            }
        }
        for i in 0..=1000 {
            let x = mu_b - 6.0 * sd_b + 12.0 * sd_b * i as f64 / 1000.0;
            let lw = q.log_density(&[x])? - p.log_density(&[x])?;
            let inside = x > t1 + 1e-9 && x < t2 - 1e-9;
            let outside = x < t1 - 1e-9 || x > t2 + 1e-9;
            if (inside && lw >= 0.0) || (outside && lw <= 0.0) {
                crossover_bad += 1;
            }
        }
    }
    println!(
        "crossover      50 pairs, {} sign/unit-ratio defects  {}",
        crossover_bad,
        if crossover_bad == 0 { "ok" } else { "VIOLATION" }
    );
    if crossover_bad > 0 {
        violations += 1;
    }

    if violations > 0 {
        return Err(CliFailure::theory(format!(
            "{violations} theory check(s) failed"
        )));
    }
    println!("all theory checks passed");
    Ok(())
}
