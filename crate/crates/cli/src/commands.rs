//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use codedstereo::geometry::{tradeoff_csv, tradeoff_curve};
use codedstereo::io::{
    self, line_plot, load_config, load_mask, load_scene_manifest, write_disparity_pfm, write_gray16, write_mask,
    write_rgb, BitDepth, Labels, LoadOptions, RunConfig, Series,
};
use codedstereo::optics::{make_cubic_mask, OpticalConfig, PhaseMask, PsfModel, PsfStack};
use codedstereo::optimize::{
    ablation_table, compare_masks, gamma_ablation, make_fisher_mask, optimize_mask, random_mask, scene_seed,
    AdamSettings, CompareSettings, EvalSettings, GammaSetting,
};
use codedstereo::recon::{
    masked_disparity_errors, match_stereo, matchable_mask, reconstruct, EdofMode, MetricAccumulator, ReconOptions,
    SceneEstimate,
};
use codedstereo::render::{render_pair_with_stack, CodedPair, Scene};
use codedstereo::synth::{level_planes, toy_scene_set};
use codedstereo::{Error, Result};

use crate::run::{io_error, Provenance};
use crate::{
    Command, Common, EvaluateArgs, MaskArgs, OptimizeArgs, PairArgs, PsfArgs, ReconArgs, RenderArgs, SceneArgs,
    StereoArgs, TradeoffArgs,
};

pub fn dispatch(command: Command, prov: &mut Provenance) -> Result<()> {
    match command {
        Command::Psf(a) => psf(a, prov),
        Command::Render(a) => render(a, prov),
        Command::Recon(a) => recon(a, prov),
        Command::Stereo(a) => stereo(a, prov),
        Command::Optimize(a) => optimize(a, prov),
        Command::Tradeoff(a) => tradeoff(a, prov),
        Command::Evaluate(a) => evaluate(a, prov),
    }
}

/// Configuration file (or defaults) with command-line overrides applied,
/// plus the output directory.
fn setup(common: &Common, sigma: Option<f64>, seed: Option<u64>) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(f) = common.f_number {
        cfg.optical = cfg.optical.with_f_number(f);
        cfg.optical.validate()?;
    }
    if let Some(s) = sigma {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::Usage(format!("--sigma must be >= 0, got {s}")));
        }
        cfg.sigma = s;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Usage("no output directory: pass --out or set output_dir".into()))?;
    cfg.output_dir = Some(out.clone());
    std::fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
    Ok((cfg, out))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn parse_size(s: &str, flag: &str) -> Result<(usize, usize)> {
    let parsed = s
        .split_once(['x', 'X'])
        .and_then(|(h, w)| Some((h.trim().parse().ok()?, w.trim().parse().ok()?)));
    match parsed {
        Some((h, w)) if h > 0 && w > 0 => Ok((h, w)),
        _ => Err(Error::Usage(format!("{flag} expects HxW, got `{s}`"))),
    }
}

fn build_mask(args: &MaskArgs, cfg: &RunConfig, seed: u64) -> Result<PhaseMask> {
    let spec = match (&args.mask, &cfg.mask_file) {
        (Some(m), _) => m.clone(),
        (None, Some(file)) => file.display().to_string(),
        (None, None) => "flat".into(),
    };
    mask_from_spec(&spec, args, &cfg.optical, seed)
}

fn mask_from_spec(spec: &str, args: &MaskArgs, config: &OpticalConfig, seed: u64) -> Result<PhaseMask> {
    match spec {
        "flat" => Ok(PhaseMask::flat(config)),
        "cubic" => make_cubic_mask(args.alpha, config),
        "random" => random_mask(config, args.random_scale, seed),
        "fisher" => {
            let adam = AdamSettings {
                iters: args.fisher_iters,
                ..Default::default()
            };
            let init = random_mask(config, args.random_scale, seed)?;
            make_fisher_mask(config, &adam, Some(&init))
        }
        path => {
            let mask = load_mask(Path::new(path))?;
            mask.check_grid(config)?;
            Ok(mask)
        }
    }
}

fn load_scenes(args: &SceneArgs, cfg: &RunConfig) -> Result<Vec<Scene>> {
    if let Some(n) = args.toy {
        if n == 0 {
            return Err(Error::Usage("--toy needs at least one scene".into()));
        }
        let (h, w) = parse_size(&args.toy_size, "--toy-size")?;
        return toy_scene_set(n, h, w, &cfg.optical, cfg.seed);
    }
    let path = args
        .manifest
        .clone()
        .or_else(|| cfg.scene_manifest.clone())
        .ok_or_else(|| Error::Usage("no scenes: pass --manifest, --toy or set scene_manifest".into()))?;
    let options = LoadOptions {
        crop: args.crop.as_deref().map(|c| parse_size(c, "--crop")).transpose()?,
        crop_seed: args.crop_seed,
    };
    load_scene_manifest(&path, &cfg.optical, &options)
}

fn stack_for(mask: &PhaseMask, config: &OpticalConfig) -> Result<PsfStack> {
    PsfModel::new(config)?.stack(mask)
}

fn psf(a: PsfArgs, prov: &mut Provenance) -> Result<()> {
    let (cfg, out) = setup(&a.common, None, a.seed)?;
    prov.set_run(&cfg, &out, a.seed);
    let mask = build_mask(&a.mask, &cfg, cfg.seed)?;
    let stack = stack_for(&mask, &cfg.optical)?;
    let written = io::export_psf_atlas(&stack, &cfg.optical, &out)?;
    write_text(&out.join("mask.txt"), &write_mask(&mask))?;
    prov.note("mask", mask.provenance);
    prov.note("kernel_images", written);
    println!("wrote {written} kernel images and moments.csv to {}", out.display());
    Ok(())
}

fn render(a: RenderArgs, prov: &mut Provenance) -> Result<()> {
    let (cfg, out) = setup(&a.common, a.sigma, a.seed)?;
    prov.set_run(&cfg, &out, Some(cfg.seed));
    let mask = build_mask(&a.mask, &cfg, cfg.seed)?;
    let scenes = load_scenes(&a.scenes, &cfg)?;
    let stack = stack_for(&mask, &cfg.optical)?;
    let mut listing = String::from("scene,left,right,sigma\n");
    for (i, scene) in scenes.iter().enumerate() {
        let pair = render_pair_with_stack(
            scene,
            &stack,
            &cfg.optical,
            cfg.sigma,
            scene_seed(cfg.seed, i),
            mask.provenance.as_str(),
        )?;
        let left = format!("{}_coded_left.png", scene.id);
        let right = format!("{}_coded_right.png", scene.id);
        write_rgb(&out.join(&left), &pair.coded_left, BitDepth::Sixteen)?;
        write_rgb(&out.join(&right), &pair.coded_right, BitDepth::Sixteen)?;
        let _ = writeln!(listing, "{},{left},{right},{:?}", scene.id, cfg.sigma);
    }
    write_text(&out.join("coded_pairs.csv"), &listing)?;
    write_text(&out.join("mask.txt"), &write_mask(&mask))?;
    prov.note("scenes", scenes.len());
    println!("rendered {} coded pairs into {}", scenes.len(), out.display());
    Ok(())
}

fn read_pair(p: &PairArgs, sigma: f64) -> Result<CodedPair> {
    let coded_left = io::read_rgb(&p.left)?;
    let coded_right = io::read_rgb(&p.right)?;
    if coded_left.dim() != coded_right.dim() {
        return Err(Error::Data(format!(
            "coded views differ in shape: {:?} vs {:?}",
            coded_left.dim(),
            coded_right.dim()
        )));
    }
    Ok(CodedPair {
        coded_left,
        coded_right,
        noise_sigma: sigma,
        mask_id: String::new(),
        scene_id: p.left.display().to_string(),
    })
}

fn truth_scene(p: &PairArgs, cfg: &RunConfig, dim: (usize, usize)) -> Result<Option<Scene>> {
    let Some(path) = &p.truth else {
        return Ok(None);
    };
    let mut scenes = load_scene_manifest(path, &cfg.optical, &LoadOptions::default())?;
    if p.scene >= scenes.len() {
        return Err(Error::Usage(format!(
            "--scene {} but the manifest lists {} scenes",
            p.scene,
            scenes.len()
        )));
    }
    let scene = scenes.swap_remove(p.scene);
    if scene.dim() != dim {
        return Err(Error::Data(format!(
            "ground truth is {:?} but the coded pair is {dim:?}",
            scene.dim()
        )));
    }
    Ok(Some(scene))
}

fn recon_options(p: &PairArgs, mode: EdofMode, nsr: Option<f64>) -> ReconOptions {
    ReconOptions {
        block_radius: p.block_radius,
        max_disp: p.max_disp,
        mode,
        nsr,
    }
}

fn recon(a: ReconArgs, prov: &mut Provenance) -> Result<()> {
    let (cfg, out) = setup(&a.common, a.sigma, None)?;
    prov.set_run(&cfg, &out, None);
    let mode: EdofMode = a.mode.parse()?;
    let mask = build_mask(&a.mask, &cfg, cfg.seed)?;
    let pair = read_pair(&a.pair, cfg.sigma)?;
    let stack = stack_for(&mask, &cfg.optical)?;
    let r = reconstruct(&pair, &stack, &cfg.optical, &recon_options(&a.pair, mode, a.nsr))?;
    write_rgb(&out.join("edof_left.png"), &r.edof_left, BitDepth::Sixteen)?;
    write_rgb(&out.join("edof_right.png"), &r.edof_right, BitDepth::Sixteen)?;
    io::png::write_bytes(&out.join("disparity.pfm"), &write_disparity_pfm(&r.disparity)?)?;
    io::png::write_bytes(
        &out.join("disparity_right.pfm"),
        &write_disparity_pfm(&r.disparity_right)?,
    )?;
    write_gray16(&out.join("confidence.png"), &r.confidence)?;
    let (_, h, w) = pair.coded_left.dim();
    if let Some(scene) = truth_scene(&a.pair, &cfg, (h, w))? {
        let valid = matchable_mask(&scene.disparity_left);
        let mut acc = MetricAccumulator::new(&cfg.optical);
        acc.add(&SceneEstimate {
            edof_left: &r.edof_left,
            edof_right: &r.edof_right,
            truth_left: &scene.texture_left,
            truth_right: &scene.texture_right,
            disparity: &r.disparity,
            truth_disparity_left: &scene.disparity_left,
            truth_disparity_right: &scene.disparity_right,
            valid: Some(&valid),
        })?;
        let report = acc.finish();
        write_text(&out.join("metrics.txt"), &report.to_key_values())?;
        write_text(&out.join("curves.csv"), &report.curves_csv())?;
        print!("{}", report.to_key_values());
    }
    Ok(())
}

fn stereo(a: StereoArgs, prov: &mut Provenance) -> Result<()> {
    let (cfg, out) = setup(&a.common, None, None)?;
    prov.set_run(&cfg, &out, None);
    let pair = read_pair(&a.pair, cfg.sigma)?;
    let options = recon_options(&a.pair, EdofMode::Layered, None);
    let r = match_stereo(
        &pair.coded_left,
        &pair.coded_right,
        &cfg.optical,
        options.block_radius,
        options.search_range(&cfg.optical),
    )?;
    io::png::write_bytes(&out.join("disparity.pfm"), &write_disparity_pfm(&r.disparity)?)?;
    io::png::write_bytes(
        &out.join("disparity_right.pfm"),
        &write_disparity_pfm(&r.disparity_right)?,
    )?;
    write_gray16(&out.join("confidence.png"), &r.confidence)?;
    let (_, h, w) = pair.coded_left.dim();
    if let Some(scene) = truth_scene(&a.pair, &cfg, (h, w))? {
        let valid = matchable_mask(&scene.disparity_left);
        let e = masked_disparity_errors(&r.disparity, &scene.disparity_left, Some(&valid))?;
        let text = format!("epe_px = {}\nbad3_pct = {}\npixels = {}\n", e.epe, e.bad3_pct, e.count);
        write_text(&out.join("metrics.txt"), &text)?;
        print!("{text}");
    }
    Ok(())
}

fn parse_triple(s: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = s
        .split([',', ' '])
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Usage(format!("expected three numbers, got `{s}`")))?;
    v.try_into()
        .map_err(|_| Error::Usage(format!("expected three numbers, got `{s}`")))
}

fn optimize(a: OptimizeArgs, prov: &mut Provenance) -> Result<()> {
    let (mut cfg, out) = setup(&a.common, a.sigma, a.seed)?;
    if let Some(g) = a.gamma {
        cfg.weights = cfg.weights.with_gamma(g);
    }
    if let Some(t) = &a.alpha_weights {
        cfg.weights.alpha = parse_triple(t)?;
    }
    cfg.weights.validate()?;
    prov.set_run(&cfg, &out, Some(cfg.seed));
    let init = build_mask(&a.mask, &cfg, cfg.seed)?;
    let scenes = load_scenes(&a.scenes, &cfg)?;
    let eval = EvalSettings {
        weights: cfg.weights,
        sigma: cfg.sigma,
        seed: cfg.seed,
        recon: ReconOptions::default(),
    };
    let adam = AdamSettings {
        iters: a.iters,
        lr: a.lr,
        fd_step: a.fd_step,
        batch_size: a.batch_size,
        ..Default::default()
    };
    let report = optimize_mask(&init, &scenes, &cfg.optical, &eval, &adam)?;
    write_text(&out.join("mask.txt"), &write_mask(&report.final_mask))?;
    write_text(&out.join("report.csv"), &report.to_csv())?;
    let mut curve: Vec<(f64, f64)> = report.iterations.iter().map(|it| (it.iter as f64, it.loss)).collect();
    curve.push((a.iters as f64, report.end_loss));
    line_plot(
        &out.join("loss.png"),
        Labels {
            title: "combined loss",
            x: "iteration",
            y: "loss",
        },
        &[Series::new("loss", curve)],
    )?;
    prov.note("scenes", scenes.len());
    prov.note("initial_loss", report.initial_loss);
    prov.note("best_loss", report.best_loss);
    prov.note("best_iteration", report.best_iteration);
    prov.note("end_loss", report.end_loss);
    println!(
        "loss {:.6} -> best {:.6} (iteration {})",
        report.initial_loss, report.best_loss, report.best_iteration
    );
    Ok(())
}

fn parse_exposures(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Usage(format!("--exposures expects start:stop:count, got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    let [start, stop, count] = parts.as_slice() else {
        return Err(bad());
    };
    let start: f64 = start.trim().parse().map_err(|_| bad())?;
    let stop: f64 = stop.trim().parse().map_err(|_| bad())?;
    let count: usize = count.trim().parse().map_err(|_| bad())?;
    if count == 0 || !(start > 0.0) || !(stop >= start) {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

fn tradeoff(a: TradeoffArgs, prov: &mut Provenance) -> Result<()> {
    let (cfg, out) = setup(&a.common, None, None)?;
    prov.set_run(&cfg, &out, None);
    let exposures = parse_exposures(&a.exposures)?;
    let coc = a.coc.unwrap_or(cfg.optical.sensor_pixel_pitch);
    let points = tradeoff_curve(&cfg.optical, a.snr, &exposures, coc)?;
    write_text(&out.join("tradeoff.csv"), &tradeoff_csv(&points))?;
    line_plot(
        &out.join("tradeoff.png"),
        Labels {
            title: "equal-SNR depth of field",
            x: "exposure (s)",
            y: "depth of field (m)",
        },
        &[
            Series::new("exact", points.iter().map(|p| (p.exposure, p.dof)).collect()),
            Series::new(
                "approximate",
                points.iter().map(|p| (p.exposure, p.dof_approx)).collect(),
            ),
        ],
    )?;
    prov.note("points", points.len());
    print!("{}", tradeoff_csv(&points));
    Ok(())
}

fn evaluate(a: EvaluateArgs, prov: &mut Provenance) -> Result<()> {
    let (cfg, out) = setup(&a.common, a.sigma, a.seed)?;
    prov.set_run(&cfg, &out, Some(cfg.seed));
    let scenes = load_scenes(&a.scenes, &cfg)?;
    let mask_args = MaskArgs {
        mask: None,
        alpha: a.alpha,
        fisher_iters: 30,
        random_scale: 100e-9,
    };
    let specs = if a.compare.is_empty() {
        vec!["cubic=cubic".to_string()]
    } else {
        a.compare.clone()
    };
    let mut masks = Vec::new();
    for s in &specs {
        let (name, spec) = s
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--compare expects name=spec, got `{s}`")))?;
        masks.push((
            name.to_string(),
            mask_from_spec(spec, &mask_args, &cfg.optical, cfg.seed)?,
        ));
    }
    let eval = EvalSettings {
        weights: cfg.weights,
        sigma: cfg.sigma,
        seed: cfg.seed,
        recon: ReconOptions::default(),
    };
    let (h, w) = scenes[0].dim();
    let planes = level_planes(h, w, &cfg.optical, cfg.seed)?;
    let settings = CompareSettings {
        eval,
        threshold_db: a.threshold,
    };
    let cmp = compare_masks(&masks, &scenes, &planes, &cfg.optical, &settings)?;
    write_text(&out.join("comparison.txt"), &cmp.to_table())?;
    write_text(&out.join("comparison.csv"), &cmp.to_csv())?;
    write_text(&out.join("curves.csv"), &cmp.curves_csv())?;
    print!("{}", cmp.to_table());
    if let Some(list) = &a.gammas {
        let gammas: Vec<GammaSetting> = list.split(',').map(str::parse).collect::<Result<_>>()?;
        let adam = AdamSettings {
            iters: a.iters,
            batch_size: a.batch_size,
            ..Default::default()
        };
        let rows = gamma_ablation(
            &gammas,
            &PhaseMask::flat(&cfg.optical),
            &scenes,
            &scenes,
            &cfg.optical,
            &eval,
            &adam,
        )?;
        let mut csv = String::from("gamma,psnr_db,ssim,epe_px,bad3_pct\n");
        for r in &rows {
            let _ = writeln!(
                csv,
                "{},{:?},{:?},{:?},{:?}",
                r.setting, r.report.psnr_db, r.report.ssim, r.report.epe_px, r.report.bad3_pct
            );
            write_text(
                &out.join(format!("ablation_mask_{}.txt", r.setting)),
                &write_mask(&r.mask),
            )?;
        }
        write_text(&out.join("ablation.txt"), &ablation_table(&rows))?;
        write_text(&out.join("ablation.csv"), &csv)?;
        print!("{}", ablation_table(&rows));
    }
    prov.note("scenes", scenes.len());
    prov.note("dof_threshold_db", cmp.threshold_db);
    Ok(())
}
