use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use goosewatch_core::capture::read_goose;
use goosewatch_core::config::RunConfig;
use goosewatch_core::detector::{evaluate_all, read_verdicts, write_attributions, write_report, write_table, write_verdicts, Profile};
use goosewatch_core::features::{read_matrix, write_matrix, write_sidecar, FeatureMatrix, Scope, Sidecar, View};
use goosewatch_core::pipeline::{detect, extract_features, latent, train_profile, write_latent};
use goosewatch_core::synth::{run_scenario, write_outputs, Scenario};
use goosewatch_core::time::Timestamp;
use goosewatch_core::window::read_labels;

use crate::exit::{CliError, CliResult, Code, Context};
use crate::{Command, ConfigArgs, ScopeArg, ViewArg};

pub const VERDICTS_FILE: &str = "verdicts.csv";
pub const ATTRIBUTIONS_FILE: &str = "attributions.csv";
pub const REPORT_FILE: &str = "report.csv";

pub fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Synth { scenario, out_dir } => synth(&scenario, &out_dir),
        Command::Extract {
            pcap,
            out,
            labels,
            t_w,
            stride,
            scope,
        } => extract(&pcap, labels.as_deref(), t_w, stride, scope, &out),
        Command::Train {
            features,
            out,
            view,
            config,
        } => train(&features, view, &config, &out),
        Command::Detect { profile, features, out_dir } => detect_cmd(&profile, &features, &out_dir),
        Command::Eval { verdicts, out } => eval(&verdicts, out),
        Command::Latent { profile, features, out } => latent_cmd(&profile, &features, &out),
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).at(path.display())
}

/// Writes through a buffered file, creating parent directories.
fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> CliResult<()>) -> CliResult<()> {
    let inner = || -> CliResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(path)?);
        body(&mut w)?;
        w.flush()?;
        Ok(())
    };
    inner().at(path.display())
}

fn read_features(path: &Path) -> CliResult<FeatureMatrix> {
    read_matrix(open(path)?).at(path.display())
}

fn read_profile(path: &Path) -> CliResult<Profile> {
    Profile::read(open(path)?).at(path.display())
}

/// The `# ...` provenance line of a file written by this tool, if any.
fn read_provenance(path: &Path) -> CliResult<Option<String>> {
    let mut first = String::new();
    open(path)?.read_line(&mut first).at(path.display())?;
    Ok(first.strip_prefix("# ").map(|s| s.trim_end().to_string()))
}

/// Window length shared by every row, in microseconds.
fn matrix_t_w(x: &FeatureMatrix) -> Option<Result<i64, ()>> {
    let first = x.meta.first()?.t_w_us;
    Some(if x.meta.iter().all(|m| m.t_w_us == first) { Ok(first) } else { Err(()) })
}

fn synth(scenario: &Path, out_dir: &Path) -> CliResult<()> {
    let text = fs::read_to_string(scenario).at(scenario.display())?;
    let s = Scenario::from_json(&text).at(scenario.display())?;
    let out = run_scenario(&s)?;
    write_outputs(&out, out_dir, &s.provenance()).at(out_dir.display())?;
    log::info!("wrote {} frames and {} intervals to {}", out.frames.len(), out.intervals.len(), out_dir.display());
    Ok(())
}

fn extract(pcap: &Path, labels: Option<&Path>, t_w: f64, stride: Option<f64>, scope: ScopeArg, out: &Path) -> CliResult<()> {
    let cfg = RunConfig {
        t_w,
        stride,
        ..RunConfig::default()
    };
    let wc = cfg.window_config().map_err(|e| CliError::new(Code::Config, e))?;
    let (frames, meta) = read_goose(pcap).at(pcap.display())?;
    if meta.malformed_count > 0 {
        log::warn!("{}: skipped {} malformed GOOSE frames", pcap.display(), meta.malformed_count);
    }
    let intervals = labels.map(|p| read_labels(open(p)?).at(p.display())).transpose()?;
    let scope = match scope {
        ScopeArg::Train => Scope::Train,
        ScopeArg::Infer => Scope::Infer,
    };
    let (x, report) = extract_features(&frames, intervals.as_deref(), &wc, scope)?;
    log::info!("{} windows, {} removed, {} interpolated values", report.rows_in, report.rows_removed, report.interpolated);
    let provenance = cfg.provenance();
    write_file(out, |w| Ok(write_matrix(w, &x, Some(&provenance))?))?;
    let sidecar = out.with_extension("json");
    write_file(&sidecar, |w| {
        write_sidecar(&mut *w, &Sidecar::for_matrix(&x, scope, &provenance)).map_err(|e| CliError::new(Code::Io, e))?;
        Ok(writeln!(w)?)
    })
}

fn load_config(args: &ConfigArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).at(p.display())?;
            serde_json::from_str(&text).map_err(|e| CliError::new(Code::Config, e).context(p.display().to_string()))?
        }
        None => RunConfig::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => {$(
            if let Some(v) = &args.$field {
                cfg.$field = v.clone();
            }
        )*};
    }
    apply!(t_w, seq_dims, temp_dims, learning_rate, epochs, batch_size, val_frac, patience, u_quantile, q, seed);
    if args.stride.is_some() {
        cfg.stride = args.stride;
    }
    Ok(cfg)
}

fn train(features: &Path, view: ViewArg, args: &ConfigArgs, out: &Path) -> CliResult<()> {
    let x = read_features(features)?;
    let mut cfg = load_config(args)?;
    let explicit_t_w = args.t_w.is_some() || args.config.is_some();
    match matrix_t_w(&x) {
        Some(Ok(us)) if !explicit_t_w => cfg.t_w = us as f64 / 1e6,
        Some(Ok(us)) if Timestamp::from_secs_f64(cfg.t_w).micros() != us => {
            return Err(CliError::new(
                Code::Config,
                anyhow::anyhow!("configured t_w {} s does not match the feature matrix ({} s)", cfg.t_w, us as f64 / 1e6),
            ));
        }
        Some(Err(())) => {
            return Err(CliError::new(Code::Schema, anyhow::anyhow!("feature matrix mixes window lengths")).context(features.display().to_string()));
        }
        _ => {}
    }
    let views: &[View] = match view {
        ViewArg::Seq => &[View::Seq],
        ViewArg::Temp => &[View::Temp],
        ViewArg::Both => &View::BOTH,
    };
    let profile = train_profile(&x, views, &cfg)?;
    write_file(out, |w| {
        profile.write(&mut *w)?;
        Ok(writeln!(w)?)
    })
}

fn detect_cmd(profile: &Path, features: &Path, out_dir: &Path) -> CliResult<()> {
    let p = read_profile(profile)?;
    let x = read_features(features)?;
    let expected = Timestamp::from_secs_f64(p.config.t_w).micros();
    if let Some(t) = matrix_t_w(&x) {
        if t != Ok(expected) {
            return Err(CliError::new(
                Code::Schema,
                anyhow::anyhow!("feature windows do not match the profile's t_w of {} s", p.config.t_w),
            )
            .context(features.display().to_string()));
        }
    }
    let verdicts = detect(&p, &x)?;
    let flagged = verdicts.iter().filter(|v| v.anomalous).count();
    log::info!("{flagged} of {} windows anomalous", verdicts.len());
    write_file(&out_dir.join(VERDICTS_FILE), |w| Ok(write_verdicts(w, &verdicts, Some(&p.provenance))?))?;
    write_file(&out_dir.join(ATTRIBUTIONS_FILE), |w| Ok(write_attributions(w, &verdicts, Some(&p.provenance))?))
}

fn eval(verdicts_path: &Path, out: Option<PathBuf>) -> CliResult<()> {
    let verdicts = read_verdicts(open(verdicts_path)?).at(verdicts_path.display())?;
    let report = evaluate_all(&verdicts).map_err(|n| {
        CliError::new(
            Code::Schema,
            anyhow::anyhow!("{n} verdicts are unlabeled; extract features with --labels to evaluate"),
        )
        .context(verdicts_path.display().to_string())
    })?;
    let provenance = read_provenance(verdicts_path)?;
    let out = out.unwrap_or_else(|| verdicts_path.with_file_name(REPORT_FILE));
    write_file(&out, |w| Ok(write_report(w, &report, provenance.as_deref())?))?;
    let stdout = std::io::stdout();
    write_table(stdout.lock(), &report)?;
    Ok(())
}

fn latent_cmd(profile: &Path, features: &Path, out: &Path) -> CliResult<()> {
    let p = read_profile(profile)?;
    let x = read_features(features)?;
    let rows = latent(&p, &x)?;
    write_file(out, |w| Ok(write_latent(w, &p, &rows, Some(&p.provenance))?))
}
