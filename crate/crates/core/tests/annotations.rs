//! Sidecar fixtures shared with the annotation tool.

use std::fs;
use std::path::{Path, PathBuf};

use augloop_core::generator::{load_background, sidecar_json, Trapezoid};
use serde::Deserialize;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/annotations")
}

fn json_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    v.sort();
    v
}

#[test]
fn golden_sidecars_load_and_reserialize_byte_for_byte() {
    let files = json_files(&fixtures().join("golden"));
    assert_eq!(files.len(), 5);
    for f in files {
        let bg = load_background(&f).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        assert_eq!(sidecar_json(&bg.meta), fs::read_to_string(&f).unwrap(), "{}", f.display());
    }
}

#[test]
fn invalid_sidecars_are_rejected_with_a_reason() {
    let expect = [
        ("far_below_near", "far edge"),
        ("nonpositive_scale", "positive"),
        ("out_of_bounds", "outside the 320x240 image"),
        ("scale_order", "scale_far"),
        ("self_intersecting", "left corners"),
        ("unknown_field", "unknown field `tags`"),
    ];
    let files = json_files(&fixtures().join("invalid"));
    assert_eq!(files.len(), expect.len());
    for (f, (stem, needle)) in files.iter().zip(expect) {
        assert_eq!(f.file_stem().unwrap(), stem);
        let err = load_background(f).unwrap_err().to_string();
        assert!(err.contains(needle), "{stem}: {err}");
    }
}

#[derive(Deserialize)]
struct PlaceFixture {
    trapezoid: Trapezoid,
    tolerance_px: f64,
    cases: Vec<PlaceCase>,
}

#[derive(Deserialize)]
struct PlaceCase {
    u_x: f64,
    u_z: f64,
    anchor: [f64; 2],
    scale: f64,
}

#[test]
fn place_matches_shared_fixture() {
    let text = fs::read_to_string(fixtures().join("place_fixture.json")).unwrap();
    let fx: PlaceFixture = serde_json::from_str(&text).unwrap();
    fx.trapezoid.validate().unwrap();
    assert!(fx.cases.iter().any(|c| c.u_x == 0.5 && c.u_z == 0.5));
    for c in &fx.cases {
        let (p, s) = fx.trapezoid.place(c.u_x, c.u_z);
        let err = (p.x - c.anchor[0]).hypot(p.y - c.anchor[1]);
        assert!(err <= fx.tolerance_px, "({}, {}): off by {err}", c.u_x, c.u_z);
        assert!((s - c.scale).abs() < 1e-6);
    }
}
