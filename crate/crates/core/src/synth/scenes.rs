//! Stock scenes: procedurally generated harbors and the bundled benchmark.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{parse_scene_file, Polygon, RouteSpec, ScanMode, SceneFile, Scene};

const CURVED_HARBOR_SCENE: &str = include_str!("../../data/curved_harbor.toml");
const CURVED_HARBOR_ROUTE: &str = include_str!("../../data/curved_harbor_route.toml");

/// Harbor with a hooked channel and a 90° turn, plus its 120-frame route.
pub fn curved_harbor() -> (SceneFile, RouteSpec) {
    (
        parse_scene_file(CURVED_HARBOR_SCENE).expect("bundled scene parses"),
        RouteSpec::parse(CURVED_HARBOR_ROUTE).expect("bundled route parses"),
    )
}

/// Frame period of the partial-sector variant, shorter than its 1 s sweep.
pub const PARTIAL_SECTOR_FRAME_PERIOD: f64 = 0.6;

/// The curved harbor seen by a radar that publishes a frame every
/// [`PARTIAL_SECTOR_FRAME_PERIOD`] seconds while the antenna still takes a
/// full second per revolution, so each frame carries about 40% stale sectors.
pub fn curved_harbor_partial() -> (SceneFile, RouteSpec) {
    let (mut scene, mut route) = curved_harbor();
    scene.sensor.mode = ScanMode::PartialSector;
    route.frame_period = PARTIAL_SECTOR_FRAME_PERIOD;
    (scene, route)
}

pub fn curved_harbor_scene_text() -> &'static str {
    CURVED_HARBOR_SCENE
}

pub fn curved_harbor_route_text() -> &'static str {
    CURVED_HARBOR_ROUTE
}

/// Irregular coastline around the origin with an open-sea gap and islets.
///
/// The shoreline radius wanders between roughly `0.9 * inner` and
/// `1.45 * inner`; land extends out to `outer`. The coast is split into eight
/// simple polygons sharing their radial seams, and a random run of two of
/// them is left out so the scene has no rotational near-symmetry. The whole
/// layout is turned by a random angle.
pub fn random_harbor(seed: u64, inner: f64, outer: f64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertices = 160;
    let harmonics: Vec<(f64, f64)> = (1..=5)
        .map(|h| (rng.random_range(0.0..0.12 / h as f64), rng.random_range(0.0..TAU)))
        .collect();
    let shore: Vec<f64> = (0..vertices)
        .map(|i| {
            let phi = i as f64 / vertices as f64 * TAU;
            let wobble: f64 = harmonics
                .iter()
                .enumerate()
                .map(|(h, &(a, p))| a * ((h + 1) as f64 * phi + p).sin())
                .sum();
            inner * (1.17 + wobble) + rng.random_range(-0.02..0.02) * inner
        })
        .collect();
    let at = |r: f64, phi: f64| [r * phi.cos(), r * phi.sin()];

    let pieces = 8;
    let per = vertices / pieces;
    let gap = rng.random_range(0..pieces);
    let mut polygons = Vec::new();
    for p in 0..pieces {
        if p == gap || p == (gap + 1) % pieces {
            continue;
        }
        let mut verts = Vec::new();
        for i in p * per..=(p + 1) * per {
            let phi = i as f64 / vertices as f64 * TAU;
            verts.push(at(shore[i % vertices], phi));
        }
        for i in (p * per..=(p + 1) * per).rev().step_by(4) {
            let phi = i as f64 / vertices as f64 * TAU;
            verts.push(at(outer, phi));
        }
        polygons.push(Polygon {
            vertices: verts,
            rcs: if rng.random_bool(0.3) { 0.5 } else { 1.0 },
        });
    }

    for _ in 0..3 {
        let phi = rng.random_range(0.0..TAU);
        let dist = rng.random_range(0.4..0.7) * inner;
        let radius = rng.random_range(0.05..0.09) * inner;
        let center = at(dist, phi);
        let n = 9;
        let verts = (0..n)
            .map(|k| {
                let a = k as f64 / n as f64 * TAU;
                let r = radius * rng.random_range(0.7..1.0);
                [center[0] + r * a.cos(), center[1] + r * a.sin()]
            })
            .collect();
        polygons.push(Polygon { vertices: verts, rcs: 1.0 });
    }

    // Seams and vertices sit on a regular angular lattice; turning the whole
    // scene keeps that lattice off the image axes and diagonals.
    let (s, c) = rng.random_range(0.0..TAU).sin_cos();
    for v in polygons.iter_mut().flat_map(|p| p.vertices.iter_mut()) {
        *v = [c * v[0] - s * v[1], s * v[0] + c * v[1]];
    }

    Scene {
        polygons,
        seed,
        ..Scene::default()
    }
}
