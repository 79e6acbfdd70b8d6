use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use psn_core::config::Config;
use psn_core::engine::{rng_from_seed, run_experiment, sub_seed, ExperimentSummary, Replayer};
use psn_core::interest::{sample_profile, InterestProfile};
use psn_core::output::{report_json, summary_json, write_json, write_results_csv, Metadata};
use psn_core::trace::{
    build_binary_profiles, filter_short_contacts, generate_synthetic_trace, parse_attribute_table, parse_profiles,
    parse_trace, write_profiles, write_trace, ProfileTable,
};
use psn_core::validation::CHECKS;
use psn_core::{Error, ProtocolSpec, RateMatrix, RateModel, Result};

use crate::{Common, Outcome};

pub struct Context {
    config: Config,
    overrides: Vec<String>,
    out: PathBuf,
}

impl Context {
    fn seed(&self) -> u64 {
        self.config.experiment.master_seed
    }

    fn metadata(&self) -> Result<Metadata> {
        Metadata::new(&self.config, self.seed(), &self.overrides)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }
}

pub fn load(common: &Common) -> Result<Context> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("experiment.master_seed={seed}"));
    }
    if let Some(out) = &common.out {
        overrides.push(format!("output.dir={}", toml_string(&out.to_string_lossy())));
    }
    let config = match &common.config {
        Some(path) => Config::load(path, &overrides)?,
        None => Config::with_overrides("", &overrides)?,
    };
    let out = config.output.dir.clone();
    fs::create_dir_all(&out)?;
    Ok(Context { config, overrides, out })
}

fn toml_string(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn print_summary(label: &str, s: &ExperimentSummary) {
    match (s.mean_delay, s.ci_low, s.ci_high) {
        (Some(m), Some(lo), Some(hi)) => println!(
            "{label}: mean delay {m:.6} (95% CI {lo:.6} to {hi:.6}), delivered {}/{}",
            s.delivered, s.trials
        ),
        _ => println!("{label}: delivered {}/{}", s.delivered, s.trials),
    }
}

pub fn run(ctx: &Context) -> Result<Outcome> {
    let experiment = ctx.config.experiment_config()?;
    let outcome = run_experiment(&experiment)?;
    let meta = ctx.metadata()?;
    let mut w = ctx.create("results.csv")?;
    write_results_csv(&mut w, &outcome.results, &meta)?;
    w.flush()?;
    let mut w = ctx.create("summary.json")?;
    write_json(&mut w, &summary_json(&outcome.summary, &meta))?;
    w.flush()?;
    print_summary(&experiment.protocol.to_string(), &outcome.summary);
    Ok(Outcome::Ok)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn resolved_gamma(spec: &ProtocolSpec) -> Option<f64> {
    match *spec {
        ProtocolSpec::InterestBased { gamma, .. } | ProtocolSpec::Spray { gamma, .. } => Some(gamma),
        _ => None,
    }
}

pub fn sweep(ctx: &Context) -> Result<Outcome> {
    let cells = ctx.config.sweep_cells();
    let rows = cells
        .par_iter()
        .map(|cell| {
            let experiment = ctx.config.with_cell(cell).experiment_config()?;
            let summary = run_experiment(&experiment)?.summary;
            Ok((cell, experiment, summary))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut w = ctx.create("sweep.csv")?;
    ctx.metadata()?.write_comment_lines(&mut w)?;
    writeln!(w, "n,delta,gamma,protocol,ttl,mean_delay,ci_low,ci_high,std_error,delivery_rate,delivered,trials")?;
    for (cell, experiment, s) in &rows {
        let delta = match experiment.rate_model {
            RateModel::InterestBased { delta, .. } => Some(delta),
            RateModel::SocialOblivious { .. } => None,
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            cell.n,
            opt(delta),
            opt(resolved_gamma(&experiment.protocol)),
            cell.protocol,
            opt(cell.ttl),
            opt(s.mean_delay),
            opt(s.ci_low),
            opt(s.ci_high),
            opt(s.std_error),
            s.delivery_rate,
            s.delivered,
            s.trials
        )?;
        print_summary(&format!("n={} {}", cell.n, experiment.protocol), s);
    }
    w.flush()?;
    Ok(Outcome::Ok)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))
}

fn load_profiles(config: &Config) -> Result<ProfileTable> {
    if let Some(path) = &config.trace.profiles {
        parse_profiles(open(path)?)
    } else if let Some(path) = &config.trace.attributes {
        build_binary_profiles(&parse_attribute_table(open(path)?)?)
    } else {
        Err(Error::Config("replay needs trace.profiles or trace.attributes".into()))
    }
}

pub fn replay(ctx: &Context) -> Result<Outcome> {
    let t = &ctx.config.trace;
    let path = t.path.as_ref().ok_or_else(|| Error::Config("replay needs trace.path".into()))?;
    let trace = filter_short_contacts(&parse_trace(open(path)?)?, t.min_contact)?;
    let profiles = load_profiles(&ctx.config)?;
    let m = profiles.m().ok_or_else(|| Error::Data("profile table is empty".into()))?;
    let spec = ctx.config.protocol.build(m)?;
    let replayer = Replayer::new(&trace, &profiles)?;
    let (first, last) = replayer
        .time_span()
        .ok_or_else(|| Error::Data("no contacts left after filtering".into()))?;
    let window = (first, t.ttl.map_or(last, |ttl| (last - ttl).max(first)));
    let mut rng = rng_from_seed(sub_seed(ctx.seed(), 0));
    let messages = replayer.sample_messages(&mut rng, t.messages, window)?;
    let results = replayer.replay_all(&spec, &messages, t.ttl)?;
    let summary = ExperimentSummary::from_results(&results);

    let meta = ctx.metadata()?;
    let mut w = ctx.create("results.csv")?;
    write_results_csv(&mut w, &results, &meta)?;
    w.flush()?;
    let mut w = ctx.create("summary.json")?;
    write_json(&mut w, &summary_json(&summary, &meta))?;
    w.flush()?;
    print_summary(&format!("replay {spec}"), &summary);
    Ok(Outcome::Ok)
}

pub fn gen_trace(ctx: &Context) -> Result<Outcome> {
    let t = &ctx.config.trace;
    let m = ctx.config.experiment.m;
    if t.nodes < 2 {
        return Err(Error::Config("trace.nodes must be at least 2".into()));
    }
    let mut rng = rng_from_seed(sub_seed(ctx.seed(), 0));
    let anchor = InterestProfile::basis(m, 0)?;
    let profiles = (0..t.nodes)
        .map(|_| sample_profile(&mut rng, m, &anchor))
        .collect::<Result<Vec<_>>>()?;
    let model = ctx.config.rate_model.build(t.nodes)?;
    let rates = RateMatrix::from_profiles(&model, &profiles)?;
    let trace = generate_synthetic_trace(&mut rng, &rates, t.horizon, t.contact_duration)?;

    let meta = ctx.metadata()?;
    let mut w = ctx.create("trace.csv")?;
    meta.write_comment_lines(&mut w)?;
    write_trace(&mut w, &trace)?;
    w.flush()?;
    let mut w = ctx.create("profiles.csv")?;
    meta.write_comment_lines(&mut w)?;
    write_profiles(&mut w, &ProfileTable::from_indexed(&profiles)?)?;
    w.flush()?;
    println!("wrote {} contacts among {} nodes", trace.len(), t.nodes);
    Ok(Outcome::Ok)
}

pub fn validate(ctx: &Context, only: &[u32]) -> Result<Outcome> {
    for n in only {
        if !CHECKS.iter().any(|c| c.number == *n) {
            return Err(Error::Config(format!("no check numbered {n}")));
        }
    }
    let mut reports = Vec::new();
    for check in CHECKS.iter().filter(|c| only.is_empty() || only.contains(&c.number)) {
        let report = (check.run)(ctx.seed())?;
        println!(
            "[{}] {:>2} {:<28} statistic={:.6} threshold={:.6}",
            if report.passed { "PASS" } else { "FAIL" },
            check.number,
            report.check_name,
            report.statistic,
            report.threshold
        );
        reports.push(report);
    }
    let mut w = ctx.create("report.json")?;
    write_json(&mut w, &report_json(&reports, &ctx.metadata()?))?;
    w.flush()?;
    Ok(if reports.iter().all(|r| r.passed) {
        Outcome::Ok
    } else {
        Outcome::ChecksFailed
    })
}
