#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hybridskin_core::nalgebra::Vector3;
use hybridskin_core::obj::{load_obj, load_obj_geometry, write_obj};
use hybridskin_core::Mesh;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybridskin"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn hybridskin")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "hybridskin {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub fn save_mesh(dir: &Path, name: &str, mesh: &Mesh) -> PathBuf {
    let path = dir.join(name);
    write_obj(&path, mesh.vertices(), mesh.faces()).unwrap();
    path
}

pub fn save_positions(dir: &Path, name: &str, positions: &[Vector3<f64>], mesh: &Mesh) -> PathBuf {
    let path = dir.join(name);
    write_obj(&path, positions, mesh.faces()).unwrap();
    path
}

pub fn read_mesh(path: &Path) -> Mesh {
    load_obj(path).unwrap()
}

pub fn read_positions(path: &Path) -> Vec<Vector3<f64>> {
    load_obj_geometry(path).unwrap().positions
}

pub fn max_coord_diff(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}
