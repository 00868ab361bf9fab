use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use protogmm::analysis::{
    gaussian_kde2d, pca_project, scott_bandwidth, vmf_kde_angles, GridSpec, ANGLE_SAMPLES,
};
use protogmm::collapse::{
    angular_stats, epsilon_sweep, normalize_rows, PrototypeMatrix, REPORT_CSV_HEADER,
};
use protogmm::config::RunConfig;
use protogmm::io::read_matrix;
use protogmm::mixture::{write_checkpoint, Toggles};
use protogmm::sim::{run_experiment, Regime, SimConfig};
use protogmm::stream::{cluster_stream, loglik_csv};
use protogmm::{Error, Result};
use serde_json::json;

use crate::manifest::ManifestBuilder;

fn write(path: &Path, text: &str) -> Result<PathBuf> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(path.to_path_buf())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

pub fn simulate(cfg: &RunConfig, out: &Path, grid: bool, m: &mut ManifestBuilder) -> Result<()> {
    cfg.validate()?;
    create_dir(out)?;
    m.param("regime", cfg.sim.regime.as_str());
    if !grid {
        let res = run_experiment(&cfg.sim, Some(out))?;
        m.param("epochs_logged", res.telemetry.len());
        m.artifacts.extend(res.telemetry_path);
        m.artifacts.extend(res.snapshot_paths);
        return Ok(());
    }
    if cfg.sim.regime != Regime::Decoupled {
        return Err(Error::InvalidArgument(
            "the toggle grid applies to the mixture and needs sim.regime = decoupled".into(),
        ));
    }
    let jobs: Vec<(Toggles, SimConfig)> = Toggles::grid()
        .into_iter()
        .map(|t| {
            let mut sim = cfg.sim.clone();
            sim.gmm.toggles = t;
            (t, sim)
        })
        .collect();
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Vec<PathBuf>>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((t, sim)) = jobs.get(i) else { break };
                let dir = out.join(t.label());
                let r = run_experiment(sim, Some(&dir)).map(|res| {
                    let mut paths: Vec<PathBuf> = res.telemetry_path.into_iter().collect();
                    paths.extend(res.snapshot_paths);
                    paths
                });
                results.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    let mut labels = Vec::new();
    for ((t, _), r) in jobs
        .iter()
        .zip(results.into_inner().expect("workers joined"))
    {
        m.artifacts.extend(r.expect("every job ran")?);
        labels.push(t.label());
    }
    m.param("grid", labels);
    Ok(())
}

fn load_prototypes(path: &Path, m: &mut ManifestBuilder) -> Result<PrototypeMatrix> {
    let raw = read_matrix(path)?;
    m.param("input", path.display().to_string());
    m.param("k", raw.nrows());
    m.param("d", raw.ncols());
    normalize_rows(&raw)
}

pub fn analyze(protos: &Path, epsilons: &[f64], out: &Path, m: &mut ManifestBuilder) -> Result<()> {
    let p = load_prototypes(protos, m)?;
    let sweep = epsilon_sweep(&p, epsilons)?;
    let mut csv = String::from(REPORT_CSV_HEADER);
    csv.push('\n');
    for r in &sweep {
        csv.push_str(&r.csv_line());
        csv.push('\n');
    }
    create_dir(out)?;
    print!("{csv}");
    m.artifacts.push(write(&out.join("collapse.csv"), &csv)?);
    m.param("epsilons", epsilons.to_vec());

    if p.k() >= 2 {
        let a = angular_stats(&p)?;
        let mut hist = String::from("bin_start_deg,bin_end_deg,count\n");
        for (i, c) in a.histogram.iter().enumerate() {
            let lo = i as f64 * a.bin_width_deg;
            let _ = writeln!(hist, "{lo:?},{:?},{c}", lo + a.bin_width_deg);
        }
        m.artifacts.push(write(&out.join("angles.csv"), &hist)?);
        m.param("min_angle_deg", a.min_angle_deg);
        m.param("mean_angle_deg", a.mean_angle_deg);
        m.param("angle_pairs_used", a.pairs_used);
        m.param("angle_pairs_subsampled", a.subsampled);
        println!(
            "min_angle_deg,{:?}\nmean_angle_deg,{:?}",
            a.min_angle_deg, a.mean_angle_deg
        );
    }
    Ok(())
}

pub fn export_kde(
    protos: &Path,
    kappa: f64,
    bandwidth: Option<f64>,
    raw: bool,
    prefix: &Path,
    m: &mut ManifestBuilder,
) -> Result<()> {
    let p = if raw {
        let r = read_matrix(protos)?;
        m.param("input", protos.display().to_string());
        PrototypeMatrix::raw(r)
    } else {
        load_prototypes(protos, m)?
    };
    m.param("normalized_rows", !raw);
    m.param("kappa", kappa);
    let proj = pca_project(&p)?;
    let h = match bandwidth {
        Some(h) => h,
        None => scott_bandwidth(&proj.points)?,
    };
    m.param("bandwidth", h);
    m.param(
        "bandwidth_rule",
        if bandwidth.is_some() {
            "fixed"
        } else {
            "scott"
        },
    );
    m.param(
        "explained_variance",
        json!([proj.explained_variance.0, proj.explained_variance.1]),
    );
    let kde = gaussian_kde2d(&proj.points, &GridSpec::default(), h)?;
    let ang = vmf_kde_angles(&proj.points, kappa, ANGLE_SAMPLES)?;
    m.param("angular_points_skipped", ang.skipped);
    m.param("angular_integral", ang.integral());
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let named = |suffix: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    m.artifacts
        .push(write(&named("_gaussian_kde.csv"), &kde.to_csv())?);
    m.artifacts
        .push(write(&named("_vmf_kde.csv"), &ang.to_csv())?);
    Ok(())
}

pub fn cluster(
    features: &Path,
    cfg: &RunConfig,
    seed: u64,
    checkpoint: &Path,
    m: &mut ManifestBuilder,
) -> Result<()> {
    cfg.validate()?;
    let x = read_matrix(features)?;
    m.param("input", features.display().to_string());
    m.param("rows", x.nrows());
    let out = cluster_stream(&x, &cfg.stream, &cfg.sim.gmm, seed)?;
    if let Some(dir) = checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_checkpoint(checkpoint, &out.state)?;
    m.artifacts.push(checkpoint.to_path_buf());
    let log_path = checkpoint.with_extension("loglik.csv");
    m.artifacts.push(write(&log_path, &loglik_csv(&out.log))?);
    m.param("updates", out.state.step);
    Ok(())
}
