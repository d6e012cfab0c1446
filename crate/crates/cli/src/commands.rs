use std::fs;
use std::path::{Path, PathBuf};

use hybridskin_core::energy::{arap_energy, normal_consistency};
use hybridskin_core::fitting::{fit_sequence, Descent, FitConfig};
use hybridskin_core::gaussians::bind_gaussians;
use hybridskin_core::graph::{build_graph as build, clamp_node_count, sample_control_nodes, DEFAULT_NEIGHBOR_COUNT, DEFAULT_NODE_COUNT};
use hybridskin_core::io::{self, Trajectory};
use hybridskin_core::obj::{load_obj, load_obj_geometry, write_obj, ObjGeometry};
use hybridskin_core::skinning::deform_mesh;
use hybridskin_core::{Error, Mesh, Metric, SkinningMode};
use hybridskin_core::nalgebra::Matrix3;
use serde_json::json;

use crate::config::RunConfig;
use crate::{BuildGraphArgs, CliError, DeformArgs, EnergyArgs, FitArgs};

fn require<T>(flag: Option<T>, config: Option<T>, name: &str) -> Result<T, CliError> {
    flag.or(config).ok_or_else(|| CliError::Usage(format!("--{name} is required")))
}

fn input(flag: Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    let path = require(flag, config.clone(), name)?;
    if !path.exists() {
        return Err(Error::InvalidArgument(format!("--{name} {} does not exist", path.display())).into());
    }
    Ok(path)
}

fn parse_choice<V: std::str::FromStr>(flag: Option<String>, config: &Option<String>, name: &str, default: V) -> Result<V, CliError> {
    match flag.or(config.clone()) {
        Some(s) => s.parse().map_err(|_| CliError::Usage(format!("invalid --{name} `{s}`"))),
        None => Ok(default),
    }
}

fn load_mesh(path: &Path) -> Result<Mesh, CliError> {
    load_obj(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())).into())
}

fn load_frame(path: &Path, rest: &Mesh) -> Result<ObjGeometry<f64>, CliError> {
    let frame = load_obj_geometry(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if !rest.matches_connectivity(frame.positions.len(), &frame.faces) {
        return Err(Error::ConnectivityMismatch(format!(
            "{}: {} vertices / {} faces, rest mesh has {} / {} with different faces",
            path.display(),
            frame.positions.len(),
            frame.faces.len(),
            rest.vertex_count(),
            rest.face_count()
        ))
        .into());
    }
    Ok(frame)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn build_graph(a: BuildGraphArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let mesh_path = input(a.mesh, &cfg.mesh, "mesh")?;
    let out = require(a.out, cfg.out.clone(), "out")?;
    let metric = parse_choice(a.metric, &cfg.metric, "metric", Metric::Geodesic)?;
    let n_neighbor = a.n_neighbor.or(cfg.n_neighbor).unwrap_or(DEFAULT_NEIGHBOR_COUNT);
    let seed = a.seed.or(cfg.seed).unwrap_or(0);

    let mesh = load_mesh(&mesh_path)?;
    let n_node = clamp_node_count(a.n_node.or(cfg.n_node).unwrap_or(DEFAULT_NODE_COUNT), mesh.vertex_count());
    let seed_vertex = (seed % mesh.vertex_count() as u64) as usize;
    let nodes = sample_control_nodes(&mesh, n_node, seed_vertex)?;
    let graph = build(&mesh, &nodes, n_neighbor, metric)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    io::save_graph(&out, &graph)?;
    log::info!("wrote {} nodes x {n_neighbor} neighbors ({metric}) to {}", graph.node_count(), out.display());
    Ok(())
}

pub fn deform(a: DeformArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let mesh_path = input(a.mesh, &cfg.mesh, "mesh")?;
    let graph_path = input(a.graph, &cfg.graph, "graph")?;
    let traj_path = input(a.trajectory, &cfg.trajectory, "trajectory")?;
    let out = require(a.out, cfg.out.clone(), "out")?;
    let mode = parse_choice(a.mode, &cfg.mode, "mode", SkinningMode::Ahs)?;

    let mesh = load_mesh(&mesh_path)?;
    let graph = io::load_graph(&graph_path, &mesh)?;
    let trajectory = Trajectory::load(&traj_path)?;
    for (k, frame) in trajectory.frames.iter().enumerate() {
        if frame.transforms.len() != graph.node_count() {
            return Err(Error::Format(format!(
                "trajectory frame {k} has {} nodes, graph has {}",
                frame.transforms.len(),
                graph.node_count()
            ))
            .into());
        }
    }
    let gaussians = match (a.per_face.or(cfg.per_face), a.gaussians.or(cfg.gaussians.clone())) {
        (Some(x), _) => Some(bind_gaussians(&mesh, x)?),
        (None, Some(path)) => Some(io::gaussians_from_json(&fs::read_to_string(&path)?, &mesh)?),
        (None, None) => None,
    };

    fs::create_dir_all(&out)?;
    for (k, frame) in trajectory.frames.iter().enumerate() {
        let d = deform_mesh(&mesh, &graph, &frame.transforms, mode)?;
        write_obj(out.join(format!("frame_{k:04}.obj")), &d.positions, mesh.faces())?;
        if let Some(set) = &gaussians {
            let (moved, centers) = set.deform(&d.positions, &d.rotations, &d.shears)?;
            fs::write(out.join(format!("gaussians_{k:04}.json")), io::gaussians_to_json(&moved, Some(&centers))?)?;
        }
    }
    log::info!("wrote {} frames ({mode}) to {}", trajectory.frames.len(), out.display());
    Ok(())
}

fn target_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no .obj targets in {}", dir.display())).into());
    }
    Ok(files)
}

pub fn fit(a: FitArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let mesh_path = input(a.mesh, &cfg.mesh, "mesh")?;
    let graph_path = input(a.graph, &cfg.graph, "graph")?;
    let targets_dir = input(a.targets, &cfg.targets, "targets")?;
    let out = require(a.out, cfg.out.clone(), "out")?;
    let defaults = FitConfig::default();
    let fit_cfg = FitConfig {
        lambda_arap: a.lambda_arap.or(cfg.lambda_arap).unwrap_or(defaults.lambda_arap),
        lambda_nc: a.lambda_nc.or(cfg.lambda_nc).unwrap_or(defaults.lambda_nc),
        max_iters: a.max_iters.or(cfg.max_iters).unwrap_or(defaults.max_iters),
        step_size: a.step_size.or(cfg.step_size).unwrap_or(defaults.step_size),
        convergence_tol: a.convergence_tol.or(cfg.convergence_tol).unwrap_or(defaults.convergence_tol),
        gradient_tol: cfg.gradient_tol.unwrap_or(defaults.gradient_tol),
        mode: parse_choice(a.mode, &cfg.mode, "mode", defaults.mode)?,
        descent: parse_choice(a.descent, &cfg.descent, "descent", Descent::default())?,
    };
    fit_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let mesh = load_mesh(&mesh_path)?;
    let graph = io::load_graph(&graph_path, &mesh)?;
    let files = target_files(&targets_dir)?;
    let mut frames = Vec::with_capacity(files.len());
    for f in &files {
        frames.push(load_frame(f, &mesh)?.positions);
    }

    let results = fit_sequence(&mesh, &graph, &frames, &fit_cfg)?;
    fs::create_dir_all(&out)?;
    let params: Vec<_> = results.iter().map(|r| r.params.clone()).collect();
    Trajectory::from_params(&params).save(&out.join("trajectory.json"))?;

    let bbox = mesh.bbox_diagonal();
    let mut report = Vec::with_capacity(results.len());
    for (k, (res, target)) in results.iter().zip(&frames).enumerate() {
        fs::write(out.join(format!("trace_{k:04}.csv")), io::trace_to_csv(&res.trace)?)?;
        let fitted = deform_mesh(&mesh, &graph, &res.params.to_transforms(), fit_cfg.mode)?.positions;
        let sq: f64 = fitted.iter().zip(target).map(|(x, y)| (x - y).norm_squared()).sum();
        let rmse = (sq / fitted.len() as f64).sqrt();
        let last = res.trace.last().expect("trace has the initial entry").value;
        report.push(json!({
            "frame": k,
            "target": files[k].file_name().map(|n| n.to_string_lossy().into_owned()),
            "iterations": res.iterations(),
            "stop": format!("{:?}", res.stop),
            "objective": last.total,
            "rmse": rmse,
            "rmse_over_bbox": rmse / bbox,
        }));
    }
    write_json(
        &out.join("fit_report.json"),
        &json!({
            "mode": fit_cfg.mode.to_string(),
            "lambda_arap": fit_cfg.lambda_arap,
            "lambda_nc": fit_cfg.lambda_nc,
            "bbox_diagonal": bbox,
            "frames": report,
        }),
    )?;
    log::info!("fitted {} frames into {}", results.len(), out.display());
    Ok(())
}

pub fn energy(a: EnergyArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let mesh_path = input(a.mesh, &cfg.mesh, "mesh")?;
    let deformed_path = input(a.deformed, &None, "deformed")?;
    let mesh = load_mesh(&mesh_path)?;
    let deformed = load_frame(&deformed_path, &mesh)?.positions;
    let rotations = match a.rotations {
        Some(p) => {
            if !p.exists() {
                return Err(Error::InvalidArgument(format!("--rotations {} does not exist", p.display())).into());
            }
            io::rotations_from_json(&fs::read_to_string(&p)?)?
        }
        None => vec![Matrix3::identity(); mesh.vertex_count()],
    };
    let arap = arap_energy(&mesh, &deformed, &rotations)?;
    let nc = normal_consistency(&mesh, &deformed)?;
    let value = json!({ "arap": arap.value, "nc": nc.value });
    println!("{value}");
    if let Some(out) = a.out.or(cfg.out.clone()) {
        write_json(&out, &value)?;
    }
    Ok(())
}
