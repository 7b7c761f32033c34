// Scratch calibration harness; deleted before release.
use poselift::data::*;
use poselift::pipeline::derive_seed;
use poselift::losses::LossWeights;
use poselift::metrics::*;
use poselift::pipeline::*;
use poselift::skeleton::*;
use std::time::Instant;

fn camera_train() -> CameraModel { CameraModel::pinhole(1100.0, [500.0, 500.0], 3200.0).unwrap() }
fn camera_xsetup() -> CameraModel { CameraModel::pinhole(900.0, [480.0, 520.0], 2300.0).unwrap() }

fn eval_model(bundle: &ModelBundle, test: &[Sample], topo: &SkeletonTopology) -> (f64, f64) {
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for s in test {
        let (p3, _) = bundle.predict(&s.y2d, None).unwrap();
        preds.push(p3);
        gts.push(s.y3d.clone().unwrap().root_center(topo).unwrap());
    }
    (mpje(&preds, &gts).unwrap(), pck(&preds, &gts, 150.0).unwrap())
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let what = args.get(1).map(String::as_str).unwrap_or("overfit");
    let topo = SkeletonTopology::default_h36m17();

    match what {
        "overfit" => {
            for lr in [1e-4, 1e-3, 1e-2] {
                let samples = generate_synthetic(8, 42, &camera_train(), &topo).unwrap();
                let config = TrainConfig {
                    hidden: 64, batch_size: 8, phase1_epochs: 500, phase2_epochs: 0, joint_epochs: 0,
                    learning_rate: lr, seed: 7, mix_ratio: vec![1], ..TrainConfig::default()
                };
                let mut bundle = ModelBundle::init(topo.clone(), config, &samples).unwrap();
                let mut log = TrainLog::in_memory();
                let t0 = Instant::now();
                train_phase_lifter(&mut bundle, &samples, &mut log).unwrap();
                let initial = log.records[0].l3d;
                let last = log.records.last().unwrap().l3d;
                println!("lr {lr:>7}: initial {initial:.4}  final {last:.6}  ratio {:.5}  ({:?})",
                         last / initial, t0.elapsed());
            }
        }
        "e2e" => {
            let n_train: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5000);
            let (p1, p2, pj): (usize, usize, usize) = (
                args.get(3).and_then(|s| s.parse().ok()).unwrap_or(50),
                args.get(4).and_then(|s| s.parse().ok()).unwrap_or(50),
                args.get(5).and_then(|s| s.parse().ok()).unwrap_or(100),
            );
            let lr: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
            let train = generate_synthetic(n_train, 1, &camera_train(), &topo).unwrap();
            let test = generate_synthetic(1000, 2, &camera_train(), &topo).unwrap();
            let config = TrainConfig {
                hidden: 256, batch_size: 64, phase1_epochs: p1, phase2_epochs: p2, joint_epochs: pj,
                learning_rate: lr, seed: 3, mix_ratio: vec![1], ..TrainConfig::default()
            };
            let mut bundle = ModelBundle::init(topo.clone(), config, &train).unwrap();
            let sources = vec![DataSource { name: "synth".into(), samples: train.clone() }];
            let mut log = TrainLog::in_memory();
            let t0 = Instant::now();
            train_full(&mut bundle, &sources, &mut log).unwrap();
            let train_time = t0.elapsed();

            // Baselines
            let gts: Vec<Pose3D> = test.iter().map(|s| s.y3d.clone().unwrap().root_center(&topo).unwrap()).collect();
            let zero = vec![Pose3D::new(vec![[0.0;3];17], Frame::RootCentered).unwrap(); gts.len()];
            let mpje_zero = mpje(&zero, &gts).unwrap();
            let centered_train: Vec<Pose3D> = train.iter().map(|s| s.y3d.clone().unwrap().root_center(&topo).unwrap()).collect();
            let mut mean_flat = vec![0.0; 51];
            for p in &centered_train { for (d, v) in p.flatten().iter().enumerate() { mean_flat[d] += v; } }
            for v in &mut mean_flat { *v /= centered_train.len() as f64; }
            let mean_pose = Pose3D::from_flat(&mean_flat, Frame::RootCentered).unwrap();
            let mean_preds = vec![mean_pose; gts.len()];
            let mpje_mean = mpje(&mean_preds, &gts).unwrap();

            let (m, p) = eval_model(&bundle, &test, &topo);
            println!("train {:?}  epochs {p1}/{p2}/{pj} lr {lr}", train_time);
            println!("zero-pose baseline MPJE {mpje_zero:.1}  mean-pose baseline MPJE {mpje_mean:.1}");
            println!("model MPJE {m:.1}  (vs 50% thresholds: {:.1} / {:.1})  PCK@150 {p:.1}", mpje_zero*0.5, mpje_mean*0.5);
            // phase loss curves snapshot
            for r in log.records.iter().step_by(10) {
                println!("  {} {}  l3d {:.4} l2d {:.4} lsymm {:.2} total {:.4}", r.phase, r.epoch, r.l3d, r.l2d, r.lsymm, r.total);
            }
        }
        "ablate" => {
            let n_train: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
            let (p1, p2, pj): (usize, usize, usize) = (
                args.get(3).and_then(|s| s.parse().ok()).unwrap_or(25),
                args.get(4).and_then(|s| s.parse().ok()).unwrap_or(25),
                args.get(5).and_then(|s| s.parse().ok()).unwrap_or(50),
            );
            let lr: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
            let hidden: usize = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(128);
            let test = generate_synthetic(600, 999, &camera_xsetup(), &topo).unwrap();
            for seed in [11u64, 22, 33] {
                let train = generate_synthetic(n_train, seed, &camera_train(), &topo).unwrap();
                let sources = vec![DataSource { name: "synth".into(), samples: train.clone() }];
                let mut results = Vec::new();
                for (name, weights, phases) in [
                    ("sup-only", LossWeights::default(), (p1, 0usize, 0usize)),
                    ("`+reproj", LossWeights { alpha: 0.5, beta: 0.5, gamma: 0.0 }, (p1, p2, pj)),
                    ("full    ", LossWeights::default(), (p1, p2, pj)),
                ] {
                    let config = TrainConfig {
                        hidden, batch_size: 64, phase1_epochs: phases.0, phase2_epochs: phases.1,
                        joint_epochs: phases.2, learning_rate: lr, seed, weights, mix_ratio: vec![1],
                        ..TrainConfig::default()
                    };
                    let mut bundle = ModelBundle::init(topo.clone(), config, &train).unwrap();
                    let mut log = TrainLog::in_memory();
                    train_full(&mut bundle, &sources, &mut log).unwrap();
                    let (m, p) = eval_model(&bundle, &test, &topo);
                    results.push((name, m, p));
                }
                println!("seed {seed}:");
                for (n, m, p) in results { println!("  {n}  MPJE {m:7.1}  PCK {p:5.1}"); }
            }
        }
        "ablate2" => {
            let n_train: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
            let (p1, p2, pj): (usize, usize, usize) = (
                args.get(3).and_then(|s| s.parse().ok()).unwrap_or(25),
                args.get(4).and_then(|s| s.parse().ok()).unwrap_or(25),
                args.get(5).and_then(|s| s.parse().ok()).unwrap_or(50),
            );
            let hidden: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(128);
            let n_twod: usize = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(n_train);
            let noise_px: f64 = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(0.0);
            let occlude: f64 = args.get(9).and_then(|s| s.parse().ok()).unwrap_or(0.7);
            let test_occlude: f64 = args.get(10).and_then(|s| s.parse().ok()).unwrap_or(0.0);
            let cam_b = CameraModel::pinhole(800.0, [450.0, 550.0], 2500.0).unwrap();
            let mut test = generate_synthetic(600, 999, &camera_xsetup(), &topo).unwrap();
            if test_occlude > 0.0 {
                use rand::prelude::*;
                let mut occ_rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x7e57);
                let limbs: [[usize; 2]; 4] = [[12, 13], [15, 16], [5, 6], [2, 3]];
                for s in &mut test {
                    if occ_rng.random::<f64>() < test_occlude {
                        let limb = limbs[occ_rng.random_range(0..4)];
                        for j in limb { s.visibility[j] = false; }
                    }
                }
            }
            for seed in [11u64, 22, 33] {
                let train = generate_synthetic(n_train, seed, &camera_train(), &topo).unwrap();
                let mut twod = generate_synthetic(n_twod, seed ^ 0x77, &cam_b, &topo).unwrap();
                {
                    use rand::prelude::*;
                    let mut occ_rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xcc);
                    let limbs: [[usize; 2]; 4] = [[12, 13], [15, 16], [5, 6], [2, 3]];
                    for s in &mut twod {
                        s.y3d = None;
                        s.source_tag = "twod".into();
                        if occ_rng.random::<f64>() < occlude {
                            let limb = limbs[occ_rng.random_range(0..4)];
                            for j in limb { s.visibility[j] = false; }
                        }
                        if noise_px > 0.0 {
                            let mut coords = s.y2d.coords().to_vec();
                            for c in &mut coords {
                                // Box-Muller pairs keep the draw count fixed.
                                let u1: f64 = occ_rng.random::<f64>().max(1e-12);
                                let u2: f64 = occ_rng.random();
                                let r = (-2.0 * u1.ln()).sqrt() * noise_px;
                                c[0] += r * (std::f64::consts::TAU * u2).cos();
                                c[1] += r * (std::f64::consts::TAU * u2).sin();
                            }
                            s.y2d = Pose2D::new(coords, poselift::skeleton::Frame::Raw).unwrap();
                        }
                    }
                }
                let mut results = Vec::new();
                for (name, weights, phases, mixed) in [
                    ("sup-only", LossWeights::default(), (p1 + pj, 0usize, 0usize), false),
                    ("`+reproj", LossWeights { alpha: 0.5, beta: 0.5, gamma: 0.0 }, (p1, p2, pj), true),
                    ("full    ", LossWeights::default(), (p1, p2, pj), true),
                ] {
                    let config = TrainConfig {
                        hidden, batch_size: 64, phase1_epochs: phases.0, phase2_epochs: phases.1,
                        joint_epochs: phases.2, learning_rate: 1e-4, seed, weights,
                        mix_ratio: if mixed { vec![1, 1] } else { vec![1] },
                        ..TrainConfig::default()
                    };
                    let mut bundle = ModelBundle::init(topo.clone(), config, &train).unwrap();
                    let mut sources = vec![DataSource { name: "synth".into(), samples: train.clone() }];
                    if mixed { sources.push(DataSource { name: "twod".into(), samples: twod.clone() }); }
                    let mut log = TrainLog::in_memory();
                    train_full(&mut bundle, &sources, &mut log).unwrap();
                    // plain and retargeted PCK
                    let mut preds = Vec::new();
                    let mut gts = Vec::new();
                    for s in &test {
                        let vis = if s.all_visible() { None } else { Some(&s.visibility[..]) };
                        let (p3, _) = bundle.predict(&s.y2d, vis).unwrap();
                        preds.push(p3);
                        gts.push(s.y3d.clone().unwrap().root_center(&topo).unwrap());
                    }
                    let plain = pck(&preds, &gts, 150.0).unwrap();
                    let retargeted: Vec<Pose3D> = preds.iter().zip(&gts).map(|(p, g)| {
                        let lens = g.bone_lengths(&topo).unwrap();
                        retarget(p, &lens, &topo).unwrap()
                    }).collect();
                    let star = pck(&retargeted, &gts, 150.0).unwrap();
                    let m = mpje(&preds, &gts).unwrap();
                    results.push((name, m, plain, star));
                }
                println!("seed {seed}:");
                for (n, m, p, s) in results { println!("  {n}  MPJE {m:7.1}  PCK {p:5.1}  PCK* {s:5.1}"); }
            }
        }
        "ablate3" => {
            // 2d-only source = augmented copies of the 3d split (alpha stripped).
            let n_train: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
            let (p1, p2, pj): (usize, usize, usize) = (
                args.get(3).and_then(|s| s.parse().ok()).unwrap_or(25),
                args.get(4).and_then(|s| s.parse().ok()).unwrap_or(25),
                args.get(5).and_then(|s| s.parse().ok()).unwrap_or(50),
            );
            let hidden: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(128);
            let copies: usize = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(1);
            let rot: f64 = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(30.0);
            let test_occlude: f64 = args.get(9).and_then(|s| s.parse().ok()).unwrap_or(0.0);
            let mut test = generate_synthetic(600, 999, &camera_xsetup(), &topo).unwrap();
            if test_occlude > 0.0 {
                use rand::prelude::*;
                let mut occ_rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x7e57);
                let limbs: [[usize; 2]; 4] = [[12, 13], [15, 16], [5, 6], [2, 3]];
                for s in &mut test {
                    if occ_rng.random::<f64>() < test_occlude {
                        let limb = limbs[occ_rng.random_range(0..4)];
                        for j in limb { s.visibility[j] = false; }
                    }
                }
            }
            for seed in [11u64, 22, 33] {
                let train = generate_synthetic(n_train, seed, &camera_train(), &topo).unwrap();
                let spec = AugmentationSpec { copies, rotation_deg: rot, ..AugmentationSpec::default() };
                let mut twod = Vec::new();
                for (i, s) in train.iter().enumerate() {
                    let centered = Sample {
                        y2d: s.y2d.root_center(&topo).unwrap(),
                        y3d: None,
                        visibility: s.visibility.clone(),
                        source_tag: "aug".into(),
                    };
                    twod.extend(augment_2d(&centered, &spec, derive_seed(seed, &[0xa9, i as u64])).unwrap());
                }
                let mut results = Vec::new();
                for (name, weights, phases, mixed) in [
                    ("sup-only", LossWeights::default(), (p1 + pj, 0usize, 0usize), false),
                    ("`+reproj", LossWeights { alpha: 0.5, beta: 0.5, gamma: 0.0 }, (p1, p2, pj), true),
                    ("full    ", LossWeights::default(), (p1, p2, pj), true),
                ] {
                    let config = TrainConfig {
                        hidden, batch_size: 64, phase1_epochs: phases.0, phase2_epochs: phases.1,
                        joint_epochs: phases.2, learning_rate: 1e-4, seed, weights,
                        mix_ratio: if mixed { vec![1, 1] } else { vec![1] },
                        ..TrainConfig::default()
                    };
                    let mut bundle = ModelBundle::init(topo.clone(), config, &train).unwrap();
                    let mut sources = vec![DataSource { name: "synth".into(), samples: train.clone() }];
                    if mixed { sources.push(DataSource { name: "aug".into(), samples: twod.clone() }); }
                    let mut log = TrainLog::in_memory();
                    train_full(&mut bundle, &sources, &mut log).unwrap();
                    let mut preds = Vec::new();
                    let mut gts = Vec::new();
                    for s in &test {
                        let vis = if s.all_visible() { None } else { Some(&s.visibility[..]) };
                        let (p3, _) = bundle.predict(&s.y2d, vis).unwrap();
                        preds.push(p3);
                        gts.push(s.y3d.clone().unwrap().root_center(&topo).unwrap());
                    }
                    let plain = pck(&preds, &gts, 150.0).unwrap();
                    let retargeted: Vec<Pose3D> = preds.iter().zip(&gts).map(|(p, g)| {
                        let lens = g.bone_lengths(&topo).unwrap();
                        retarget(p, &lens, &topo).unwrap()
                    }).collect();
                    let star = pck(&retargeted, &gts, 150.0).unwrap();
                    let m = mpje(&preds, &gts).unwrap();
                    results.push((name, m, plain, star));
                }
                println!("seed {seed}:");
                for (n, m, p, s) in results { println!("  {n}  MPJE {m:7.1}  PCK {p:5.1}  PCK* {s:5.1}"); }
            }
        }
        "ablate4" => {
            // Weak-perspective cameras: depth is under-determined by 2d, so
            // the geometric priors have something to resolve.
            let n_train: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
            let (p1, p2, pj): (usize, usize, usize) = (
                args.get(3).and_then(|s| s.parse().ok()).unwrap_or(25),
                args.get(4).and_then(|s| s.parse().ok()).unwrap_or(25),
                args.get(5).and_then(|s| s.parse().ok()).unwrap_or(50),
            );
            let hidden: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(128);
            let occlude: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(0.7);
            let cam_a = CameraModel::pinhole(2400.0, [500.0, 500.0], 7000.0).unwrap();
            let cam_b = CameraModel::pinhole(2000.0, [470.0, 530.0], 6000.0).unwrap();
            let cam_c = CameraModel::pinhole(2800.0, [515.0, 485.0], 8200.0).unwrap();
            let test = generate_synthetic(600, 999, &cam_c, &topo).unwrap();
            for seed in [11u64, 22, 33] {
                let train = generate_synthetic(n_train, seed, &cam_a, &topo).unwrap();
                let mut twod = generate_synthetic(n_train, seed ^ 0x77, &cam_b, &topo).unwrap();
                {
                    use rand::prelude::*;
                    let mut occ_rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xcc);
                    let limbs: [[usize; 2]; 4] = [[12, 13], [15, 16], [5, 6], [2, 3]];
                    for s in &mut twod {
                        s.y3d = None;
                        s.source_tag = "twod".into();
                        if occ_rng.random::<f64>() < occlude {
                            let limb = limbs[occ_rng.random_range(0..4)];
                            for j in limb { s.visibility[j] = false; }
                        }
                    }
                }
                let mut results = Vec::new();
                for (name, weights, phases, mixed) in [
                    ("sup-only", LossWeights::default(), (p1 + pj, 0usize, 0usize), false),
                    ("`+reproj", LossWeights { alpha: 0.5, beta: 0.5, gamma: 0.0 }, (p1, p2, pj), true),
                    ("full    ", LossWeights::default(), (p1, p2, pj), true),
                ] {
                    let config = TrainConfig {
                        hidden, batch_size: 64, phase1_epochs: phases.0, phase2_epochs: phases.1,
                        joint_epochs: phases.2, learning_rate: 1e-4, seed, weights,
                        mix_ratio: if mixed { vec![1, 1] } else { vec![1] },
                        ..TrainConfig::default()
                    };
                    let mut bundle = ModelBundle::init(topo.clone(), config, &train).unwrap();
                    let mut sources = vec![DataSource { name: "synth".into(), samples: train.clone() }];
                    if mixed { sources.push(DataSource { name: "twod".into(), samples: twod.clone() }); }
                    let mut log = TrainLog::in_memory();
                    train_full(&mut bundle, &sources, &mut log).unwrap();
                    let mut preds = Vec::new();
                    let mut gts = Vec::new();
                    for s in &test {
                        let (p3, _) = bundle.predict(&s.y2d, None).unwrap();
                        preds.push(p3);
                        gts.push(s.y3d.clone().unwrap().root_center(&topo).unwrap());
                    }
                    let plain = pck(&preds, &gts, 150.0).unwrap();
                    let retargeted: Vec<Pose3D> = preds.iter().zip(&gts).map(|(p, g)| {
                        let lens = g.bone_lengths(&topo).unwrap();
                        retarget(p, &lens, &topo).unwrap()
                    }).collect();
                    let star = pck(&retargeted, &gts, 150.0).unwrap();
                    let m = mpje(&preds, &gts).unwrap();
                    // Mean absolute left/right bone-length asymmetry of the predictions (mm).
                    let mut asym = 0.0;
                    let mut n_pairs = 0;
                    for p in &preds {
                        let lens = p.bone_lengths(&topo).unwrap();
                        for seg in topo.symmetric_segments() {
                            for (l, r) in seg.left.iter().zip(seg.right.iter()) {
                                let li = topo.bone_position(*l).unwrap();
                                let ri = topo.bone_position(*r).unwrap();
                                asym += (lens[li] - lens[ri]).abs();
                                n_pairs += 1;
                            }
                        }
                    }
                    results.push((name, m, plain, star, asym / n_pairs as f64));
                }
                println!("seed {seed}:");
                for (n, m, p, s, a) in results { println!("  {n}  MPJE {m:7.1}  PCK {p:5.1}  PCK* {s:5.1}  asym {a:5.1}mm"); }
            }
        }
        "bn" => {
            let n_train: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
            let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(30);
            let test = generate_synthetic(500, 777, &camera_train(), &topo).unwrap();
            for seed in [5u64, 6, 7] {
                let train = generate_synthetic(n_train, seed, &camera_train(), &topo).unwrap();
                let mut errs = Vec::new();
                for bn in [true, false] {
                    let config = TrainConfig {
                        hidden: 128, batch_size: 64, phase1_epochs: 0, phase2_epochs: epochs, joint_epochs: 0,
                        learning_rate: 1e-4, seed, mix_ratio: vec![1], ..TrainConfig::default()
                    };
                    let mut bundle = ModelBundle::init_custom(topo.clone(), config, &train, bn).unwrap();
                    let mut log = TrainLog::in_memory();
                    train_phase_reprojector(&mut bundle, &train, &mut log).unwrap();
                    // reprojection error in px on held-out: GT3d -> reproj -> px vs GT2d
                    let mut total = 0.0; let mut n = 0;
                    for s in &test {
                        let gt3 = s.y3d.clone().unwrap().root_center(&topo).unwrap();
                        let x = gt3.normalize(&bundle.stats3d).unwrap().flatten();
                        let xm = ndarray::Array2::from_shape_vec((1, x.len()), x).unwrap();
                        let r2n = bundle.reprojector.forward_eval(&xm).unwrap();
                        let flat: Vec<f64> = (0..r2n.ncols()).map(|d| r2n[[0,d]] * bundle.stats2d.std[d] + bundle.stats2d.mean[d]).collect();
                        let gt2 = s.y2d.root_center(&topo).unwrap().flatten();
                        for j in 0..17 {
                            let dx = flat[2*j] - gt2[2*j]; let dy = flat[2*j+1] - gt2[2*j+1];
                            total += (dx*dx + dy*dy).sqrt(); n += 1;
                        }
                    }
                    errs.push(total / n as f64);
                }
                println!("seed {seed}: with-bn {:.3} px   without-bn {:.3} px", errs[0], errs[1]);
            }
        }
        _ => eprintln!("unknown mode"),
    }
}
