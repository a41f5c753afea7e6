use std::fs;
use std::io::Write;
use std::path::Path;

use maskcal::adapt::{run_benchmark, BenchmarkConfig, BenchmarkOutcome, StepRecord};
use maskcal::hmc::{
    calibrate_mask_set, calibrate_with_superpixels, init_centroids, update_centroids_from_calibration, HmcConfig,
    InvalidCentroidPolicy, StageOrder,
};
use maskcal::io::{self, MaskSetDocument};
use maskcal::metrics::{compute_pq, match_segments_with, resolve_overlaps, MatchOptions};
use maskcal::superpixel::{compute_superpixels, SlicConfig};
use maskcal::synth::{generate_scene, perturb_predictions, Domain, PerturbConfig, SceneConfig, RNG_ALGORITHM};
use maskcal::types::{CentroidStore, PanopticLabel, VOID};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::{
    CalibrateArgs, DomainArg, EvaluateArgs, PolicyArg, SelftrainArgs, SlicArgs, SuperpixelArgs, SynthArgs,
};

fn read_toml<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|source| io::IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|source| {
        CliError::File(io::IoError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn slic_config(a: &SlicArgs) -> SlicConfig {
    SlicConfig {
        target_count: a.count,
        compactness: a.compactness,
        ..SlicConfig::default()
    }
}

#[derive(Serialize)]
struct SceneMeta<'a> {
    rng: &'static str,
    seed: u64,
    domain: Domain,
    config: &'a SceneConfig,
}

pub fn synth(a: SynthArgs) -> CliResult<()> {
    let mut cfg: SceneConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => SceneConfig::default(),
    };
    if let Some(h) = a.height {
        cfg.height = h;
    }
    if let Some(w) = a.width {
        cfg.width = w;
    }
    cfg.validate()?;
    let domain = match a.domain {
        DomainArg::Source => Domain::Source,
        DomainArg::Target => Domain::Target,
    };
    let perturb = PerturbConfig {
        flip_rate: a.flip_rate,
        boundary_radius: a.boundary_radius,
        impostor_rate: a.impostor_rate,
    };
    let seeds: Vec<u64> = (0..a.count).map(|i| a.seed.wrapping_add(i)).collect();
    seeds.par_iter().try_for_each(|&seed| {
        let dir = if a.count == 1 {
            a.out.clone()
        } else {
            a.out.join(format!("scene_{seed}"))
        };
        create_dir(&dir)?;
        let scene_cfg = cfg.with_seed(seed);
        let scene = generate_scene(&scene_cfg, domain)?;
        io::write_feature_map(&dir.join("features.udtf"), &scene.features)?;
        io::write_feature_map(&dir.join("image.udtf"), &scene.image)?;
        io::write_label(&dir.join("gt.udtf"), &scene.gt)?;
        io::write_json(
            &dir.join("scene.json"),
            &SceneMeta {
                rng: RNG_ALGORITHM,
                seed,
                domain,
                config: &scene_cfg,
            },
        )?;
        if a.perturb {
            let pred = perturb_predictions(&scene.gt, cfg.num_categories, &perturb, seed)?;
            let mut doc = MaskSetDocument::from_mask_set(&pred, io::default_category_names(cfg.num_categories));
            doc.rng = Some(RNG_ALGORITHM.into());
            doc.seed = Some(seed);
            io::write_mask_set(&dir.join("predictions.json"), &doc)?;
        }
        Ok(())
    })
}

pub fn superpixels(a: SuperpixelArgs) -> CliResult<()> {
    let image = io::read_feature_map(&a.image)?;
    let sp = compute_superpixels(&image, &slic_config(&a.slic))?;
    io::write_superpixels(&a.out, &sp)?;
    if let Some(p) = &a.overlay {
        io::write_atomic(p, &crate::ppm::overlay(&image, &sp))?;
    }
    println!("{} superpixels", sp.count());
    Ok(())
}

pub fn calibrate(a: CalibrateArgs) -> CliResult<()> {
    let features = io::read_feature_map(&a.features)?;
    let image = io::read_feature_map(&a.image)?;
    let doc = io::read_mask_set(&a.masks)?;
    let masks = doc.to_mask_set()?;
    let (h, w) = masks.dims();
    let c = masks.num_categories();

    let mut cfg = HmcConfig::with_order(a.order.parse::<StageOrder>()?);
    cfg.overlap_ratio_threshold = a.rho;
    cfg.vote_majority = a.vote;
    cfg.temperature = a.tau;
    cfg.invalid_centroid_policy = match a.invalid_policy {
        PolicyArg::Neutral => InvalidCentroidPolicy::Neutral,
        PolicyArg::Exclude => InvalidCentroidPolicy::Exclude,
    };
    cfg.superpixels = slic_config(&a.slic);
    cfg.validate()?;

    let store = match (&a.centroids, &a.init_from) {
        (Some(p), _) => {
            let s = io::read_centroids(p)?;
            match a.gamma_prime {
                Some(g) => CentroidStore::from_parts(s.centroids().to_vec(), s.valid().to_vec(), g)?,
                None => s,
            }
        }
        (None, Some(p)) => {
            let init = io::read_mask_set(p)?.to_mask_set()?;
            init_centroids(
                init.masks().iter().map(|m| (m, &features)),
                c,
                features.channels(),
                a.gamma_prime.unwrap_or(0.9),
                cfg.pooling,
            )?
        }
        (None, None) => return Err(CliError::Usage("--centroids or --init-from is required".into())),
    };

    let calibrated = match &a.superpixel_map {
        Some(p) => calibrate_with_superpixels(&masks, &features, &io::read_superpixels(p)?, &store, &cfg)?,
        None => calibrate_mask_set(&masks, &features, &image, &store, &cfg)?,
    };
    let out = MaskSetDocument::from_calibrated(&calibrated, h, w, c, doc.category_names.clone());
    io::write_mask_set(&a.out, &out)?;
    if let Some(p) = &a.centroids_out {
        let next = update_centroids_from_calibration(&store, &calibrated, &features, &cfg)?;
        io::write_centroids(p, &next)?;
    }
    if let Some(p) = &a.label_out {
        io::write_label(p, &resolve_overlaps(&calibrated, h, w)?)?;
    }
    let dropped = calibrated.iter().filter(|m| m.dropped).count();
    let recategorised = calibrated
        .iter()
        .filter(|m| m.corrected_category != m.original.category())
        .count();
    println!(
        "{} masks calibrated ({recategorised} recategorised, {dropped} dropped)",
        calibrated.len()
    );
    Ok(())
}

fn read_prediction(path: &Path) -> CliResult<(PanopticLabel, Option<MaskSetDocument>)> {
    if path.extension().is_some_and(|e| e == "json") {
        let doc = io::read_mask_set(path)?;
        let set = doc.to_corrected_mask_set()?;
        Ok((resolve_overlaps(set.masks(), set.height(), set.width())?, Some(doc)))
    } else {
        Ok((io::read_label(path)?, None))
    }
}

fn max_category(label: &PanopticLabel) -> Option<usize> {
    label
        .category_plane()
        .iter()
        .filter(|&&c| c != VOID)
        .max()
        .map(|&c| c as usize)
}

pub fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let (pred, doc) = read_prediction(&a.pred)?;
    let gt = io::read_label(&a.gt)?;
    let inferred = max_category(&pred)
        .max(max_category(&gt))
        .map_or(0, |c| c + 1)
        .max(doc.as_ref().map_or(0, |d| d.num_categories));
    let categories = a.categories.unwrap_or(inferred);
    if categories < inferred {
        return Err(CliError::Usage(format!(
            "--categories {categories} is smaller than the {inferred} categories present"
        )));
    }
    let m = match_segments_with(
        &pred,
        &gt,
        MatchOptions {
            ignore_void: a.ignore_void,
        },
    )?;
    let report = compute_pq(&m, categories);
    if let Some(p) = &a.out {
        io::write_json(p, &report)?;
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
    } else {
        let names = doc.map_or_else(|| io::default_category_names(categories), |d| d.category_names);
        print!("{}", report.to_table(&names));
    }
    Ok(())
}

#[derive(Serialize)]
struct LogLine<'a> {
    seed: u64,
    #[serde(flatten)]
    record: &'a StepRecord,
}

#[derive(Serialize)]
struct SeedOutcome {
    seed: u64,
    #[serde(flatten)]
    outcome: BenchmarkOutcome,
}

#[derive(Serialize)]
struct SelftrainReport<'a> {
    rng: &'static str,
    config: &'a BenchmarkConfig,
    runs: Vec<SeedOutcome>,
}

pub fn selftrain(a: SelftrainArgs) -> CliResult<()> {
    let mut cfg: BenchmarkConfig = read_toml(&a.config)?;
    match a.order.as_deref() {
        None => {}
        Some("none") => cfg.calibration = None,
        Some(order) => {
            let order: StageOrder = order.parse()?;
            cfg.calibration.get_or_insert_with(HmcConfig::default).stage_order = order;
        }
    }
    cfg.validate()?;
    let seeds: Vec<u64> = (0..a.seeds).map(|i| a.seed.wrapping_add(i)).collect();
    let runs: Vec<(u64, Vec<StepRecord>, BenchmarkOutcome)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut log = Vec::new();
            let outcome = run_benchmark(&cfg, seed, |r| log.push(r.clone()))?;
            Ok((seed, log, outcome))
        })
        .collect::<maskcal::Result<_>>()?;

    if let Some(p) = &a.log {
        let mut text = Vec::new();
        for (seed, log, _) in &runs {
            for record in log {
                serde_json::to_writer(&mut text, &LogLine { seed: *seed, record }).expect("log line serialises");
                text.push(b'\n');
            }
        }
        io::write_atomic(p, &text)?;
    }
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{:>6} {:>14} {:>14} {:>14}", "seed", "initial mPQ", "final mPQ", "final mRQ");
    for (seed, _, o) in &runs {
        let _ = writeln!(
            stdout,
            "{seed:>6} {:>14.4} {:>14.4} {:>14.4}",
            o.initial_target.m_pq, o.final_target.m_pq, o.final_target.m_rq
        );
    }
    if let Some(p) = &a.out {
        let report = SelftrainReport {
            rng: maskcal::synth::RNG_ALGORITHM,
            config: &cfg,
            runs: runs
                .into_iter()
                .map(|(seed, _, outcome)| SeedOutcome { seed, outcome })
                .collect(),
        };
        io::write_json(p, &report)?;
    }
    Ok(())
}
