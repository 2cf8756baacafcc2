use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use link3d::bench::{run_latency_bench, scene_hash};
use link3d::descriptor::{decode_descriptors, descriptors_csv, encode_descriptors, Link3dDescriptor, DESCRIPTOR_DUMP_MAGIC};
use link3d::keypoints::keypoint_dump;
use link3d::matcher::{
    correspondences_csv, expand_to_edge_matches, match_descriptors, match_descriptors_parallel, matches_csv, MatchPair,
};
use link3d::pipeline::{extract_features_timed, PipelineConfig, SensorPreset};
use link3d::registration::{
    parse_pose_rows, register_scans, residual, rotation_error, translation_error, RegistrationError, RigidPose,
};
use link3d::scan_io::{
    read_scan, write_kitti_bin, write_pcd_ascii, write_scan_dump, IngestOptions, LidarScan, RingConfig, ScanFormat,
};
use link3d::synth::{generate_scene, transformed_pair, SceneSpec};
use nalgebra::Vector3;

use crate::CommonArgs;

/// A failed command: exit status and message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    /// Bad input, unreadable or unwritable files, invalid configuration.
    fn input(message: impl ToString) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }

    /// The scans were read but could not be matched.
    fn matching(message: impl ToString) -> Self {
        Failure {
            code: 3,
            message: message.to_string(),
        }
    }
}

pub struct SynthArgs {
    pub output: PathBuf,
    pub pair: Option<PathBuf>,
    pub pose_out: Option<PathBuf>,
    pub yaw: f64,
    pub translation: String,
    pub poles: usize,
    pub noise: f64,
    pub area: f64,
    pub ground: bool,
    pub output_format: Option<ScanFormat>,
}

pub struct Context {
    config: PipelineConfig,
    ingest: IngestOptions,
    format: Option<ScanFormat>,
    ground_truth: Option<RigidPose>,
    pool: Option<rayon::ThreadPool>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

fn parse_vector(text: &str) -> Result<Vector3<f64>, Failure> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::input(format!("expected x,y,z, got `{text}`")))?;
    match parts[..] {
        [x, y, z] => Ok(Vector3::new(x, y, z)),
        _ => Err(Failure::input(format!("expected x,y,z, got `{text}`"))),
    }
}

impl Context {
    pub fn new(args: &CommonArgs) -> Result<Self, Failure> {
        let mut config = PipelineConfig::default();
        if let Some(path) = &args.config {
            let text = String::from_utf8(read(path)?).map_err(|_| Failure::input(format!("{} is not UTF-8", path.display())))?;
            config
                .apply_text(&text)
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        }
        let overrides = [
            ("preset", args.preset.clone()),
            ("num_anchors", args.k_anchors.map(|v| v.to_string())),
            ("score_threshold", args.score_threshold.map(|v| v.to_string())),
            ("dim_tolerance", args.dim_tolerance.map(|v| v.to_string())),
            ("threads", args.threads.map(|v| v.to_string())),
            ("seed", args.seed.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(value) = value {
                config.set(key, &value).map_err(Failure::input)?;
            }
        }
        config.validate().map_err(Failure::input)?;
        if let Some(path) = &args.dump_config {
            write(path, config.to_text())?;
        }
        let ground_truth = match &args.ground_truth {
            Some(path) => {
                let text = String::from_utf8_lossy(&read(path)?).into_owned();
                let poses = parse_pose_rows(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
                Some(
                    *poses
                        .first()
                        .ok_or_else(|| Failure::input(format!("{} holds no pose", path.display())))?,
                )
            }
            None => None,
        };
        let pool = if config.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.threads)
                    .build()
                    .map_err(Failure::input)?,
            )
        } else {
            None
        };
        let rings = match config.preset {
            SensorPreset::Hdl64 => RingConfig::HDL64,
            SensorPreset::Vlp16 => RingConfig::VLP16,
        };
        Ok(Context {
            ingest: IngestOptions {
                rings,
                ..IngestOptions::default()
            },
            config,
            format: args.input_format,
            ground_truth,
            pool,
        })
    }

    fn run<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        match &self.pool {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }

    fn read_scan(&self, path: &Path) -> Result<LidarScan, Failure> {
        if !path.exists() {
            return Err(Failure::input(format!("cannot read {}: no such file", path.display())));
        }
        let format = self
            .format
            .or_else(|| ScanFormat::detect(path))
            .ok_or_else(|| Failure::input(format!("cannot tell the format of {}; pass --input-format", path.display())))?;
        read_scan(path, format, &self.ingest).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
    }

    fn match_sets(&self, a: &[Link3dDescriptor], b: &[Link3dDescriptor]) -> Vec<MatchPair> {
        if self.config.threads > 1 {
            self.run(|| match_descriptors_parallel(a, b, &self.config.matcher))
        } else {
            match_descriptors(a, b, &self.config.matcher)
        }
    }

    pub fn extract(&self, input: &Path, output: &Path) -> Result<(), Failure> {
        let scan = self.read_scan(input)?;
        let (features, timings) = self.run(|| extract_features_timed(&scan, &self.config));
        write(
            &with_suffix(output, ".keypoints.txt"),
            keypoint_dump(&features.clusters, &features.keypoints),
        )?;
        write(&with_suffix(output, ".desc"), encode_descriptors(&features.descriptors))?;
        write(&with_suffix(output, ".desc.csv"), descriptors_csv(&features.descriptors))?;
        println!("points: {}", scan.len());
        println!("edge_points: {}", features.edges.len());
        println!("keypoints: {}", features.keypoints.len());
        println!("extraction_ms: {:.3}", timings.extraction_ms);
        println!("description_ms: {:.3}", timings.description_ms);
        Ok(())
    }

    pub fn match_inputs(&self, input_a: &Path, input_b: &Path, output: &Path, inlier_threshold: f64) -> Result<(), Failure> {
        let dump = |path: &Path| -> Result<Option<Vec<Link3dDescriptor>>, Failure> {
            let bytes = read(path)?;
            if !bytes.starts_with(DESCRIPTOR_DUMP_MAGIC) {
                return Ok(None);
            }
            decode_descriptors(&bytes)
                .map(Some)
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
        };
        let (matches, correspondences, match_ms) = match (dump(input_a)?, dump(input_b)?) {
            (Some(a), Some(b)) => {
                let start = Instant::now();
                let matches = self.match_sets(&a, &b);
                (matches, Vec::new(), start.elapsed().as_secs_f64() * 1e3)
            }
            (None, None) => {
                let scan_a = self.read_scan(input_a)?;
                let scan_b = self.read_scan(input_b)?;
                let fa = self.run(|| extract_features_timed(&scan_a, &self.config).0);
                let fb = self.run(|| extract_features_timed(&scan_b, &self.config).0);
                let start = Instant::now();
                let matches = self.match_sets(&fa.descriptors, &fb.descriptors);
                let match_ms = start.elapsed().as_secs_f64() * 1e3;
                let cs = expand_to_edge_matches(&matches, &fa.clusters, &fb.clusters);
                (matches, cs, match_ms)
            }
            _ => return Err(Failure::input("format mismatch: give two scans or two descriptor dumps")),
        };
        write(&with_suffix(output, ".matches.csv"), matches_csv(&matches))?;
        write(
            &with_suffix(output, ".correspondences.csv"),
            correspondences_csv(&correspondences),
        )?;
        println!("matches: {}", matches.len());
        println!("correspondences: {}", correspondences.len());
        println!("match_ms: {match_ms:.3}");
        if let Some(gt) = &self.ground_truth {
            let inliers = correspondences.iter().filter(|c| residual(gt, c) <= inlier_threshold).count();
            println!("gt_inliers: {inliers}");
            if correspondences.is_empty() {
                println!("inlier_fraction: n/a");
            } else {
                println!("inlier_fraction: {:.4}", inliers as f64 / correspondences.len() as f64);
            }
        }
        Ok(())
    }

    pub fn register(&self, input_a: &Path, input_b: &Path) -> Result<(), Failure> {
        let scan_a = self.read_scan(input_a)?;
        let scan_b = self.read_scan(input_b)?;
        let result = self
            .run(|| register_scans(&scan_a, &scan_b, &self.config))
            .map_err(|e| match e {
                RegistrationError::MatchingFailure {
                    matches,
                    correspondences,
                    ..
                } => Failure::matching(format!("{e} ({matches} matches, {correspondences} correspondences)")),
                other => Failure::matching(format!("matching failure: {other}")),
            })?;
        println!("{}", result.pose);
        println!("matches: {}", result.num_matches);
        println!("correspondences: {}", result.num_correspondences);
        println!("inliers: {}", result.num_inliers);
        println!("residual_m: {:.6}", result.rms_residual);
        println!("time_ms: {:.3}", result.time_ms);
        if let Some(gt) = &self.ground_truth {
            println!("angular_err_deg: {:.6}", rotation_error(&result.pose.rotation, &gt.rotation));
            println!(
                "transl_err_m: {:.6}",
                translation_error(&result.pose.translation, &gt.translation)
            );
        }
        Ok(())
    }

    pub fn bench(&self, points: usize, matching_keypoints: usize, repetitions: usize) -> Result<(), Failure> {
        let report = self
            .run(|| {
                run_latency_bench(
                    points,
                    matching_keypoints,
                    repetitions,
                    self.config.registration.seed,
                    &self.config,
                )
            })
            .map_err(Failure::input)?;
        println!("{}", report.to_json());
        Ok(())
    }

    pub fn synth(&self, args: &SynthArgs) -> Result<(), Failure> {
        let spec = SceneSpec {
            num_poles: args.poles,
            area: args.area,
            rings: self.config.preset.num_rings(),
            ground: args.ground,
            noise_sigma: args.noise,
            seed: self.config.registration.seed,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).map_err(Failure::input)?;
        write_output(&args.output, args.output_format, &scene.scan)?;
        println!("points: {}", scene.scan.len());
        println!("poles: {}", scene.poles.len());
        println!("scene_hash: {}", scene_hash(&scene.scan));
        if let Some(pair) = &args.pair {
            let (_, moved, pose) = transformed_pair(&spec, args.yaw, parse_vector(&args.translation)?).map_err(Failure::input)?;
            write_output(pair, args.output_format, &moved)?;
            println!("pair_hash: {}", scene_hash(&moved));
            println!("pose: {pose}");
            if let Some(path) = &args.pose_out {
                write(path, format!("{pose}\n"))?;
            }
        }
        Ok(())
    }
}

fn write_output(path: &Path, format: Option<ScanFormat>, scan: &LidarScan) -> Result<(), Failure> {
    let format = format.or_else(|| ScanFormat::detect(path)).unwrap_or(ScanFormat::Lk3dScan);
    match format {
        ScanFormat::KittiBin => write_kitti_bin(path, scan),
        ScanFormat::Pcd => write_pcd_ascii(path, scan),
        ScanFormat::Lk3dScan => write_scan_dump(path, scan),
    }
    .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}
