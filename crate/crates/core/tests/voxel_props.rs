use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vistagraph::voxel::{CellClass, CellIndex, VoxelGrid};

#[derive(Debug, Clone)]
struct Scene {
    cs: f64,
    dims: [usize; 3],
    occupied: Vec<bool>,
    a: [f64; 3],
    b: [f64; 3],
}

impl Scene {
    fn grid(&self) -> VoxelGrid {
        let mut g = VoxelGrid::new([0.0; 3], self.cs, self.dims).unwrap();
        for (i, &occ) in self.occupied.iter().enumerate() {
            if occ {
                g.set(unflatten(i, self.dims), CellClass::Building);
            }
        }
        g
    }

    fn point(&self, f: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| f[i] * self.dims[i] as f64 * self.cs)
    }
}

fn unflatten(i: usize, d: [usize; 3]) -> CellIndex {
    [i % d[0], (i / d[0]) % d[1], i / (d[0] * d[1])]
}

fn scene() -> impl Strategy<Value = Scene> {
    (prop::sample::select(vec![0.5, 1.0, 2.0, 5.0]), 2usize..10, 2usize..10, 2usize..8)
        .prop_flat_map(|(cs, x, y, z)| {
            let n = x * y * z;
            let frac = || prop::array::uniform3(0.0..1.0f64);
            (prop::collection::vec(prop::bool::weighted(0.25), n), frac(), frac())
                .prop_map(move |(occupied, fa, fb)| {
                    let mut s = Scene { cs, dims: [x, y, z], occupied, a: [0.0; 3], b: [0.0; 3] };
                    s.a = s.point(fa);
                    s.b = s.point(fb);
                    s
                })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn los_is_symmetric(s in scene()) {
        let g = s.grid();
        prop_assert_eq!(g.los(s.a, s.b), g.los(s.b, s.a));
    }

    #[test]
    fn adding_occupancy_never_clears(s in scene(), extra in prop::collection::vec(any::<prop::sample::Index>(), 1..20)) {
        let g = s.grid();
        let mut more = g.clone();
        for ix in &extra {
            more.set(unflatten(ix.index(s.occupied.len()), s.dims), CellClass::Canopy);
        }
        prop_assert!(more.los(s.a, s.b) <= g.los(s.a, s.b));
    }

    #[test]
    fn refining_cells_keeps_the_verdict(s in scene()) {
        let mut coarse = s.grid();
        // endpoint cells never block; emptying them makes the refined grid equivalent
        for p in [s.a, s.b] {
            if let Some(c) = coarse.cell_of(p) {
                coarse.set(c, CellClass::Empty);
            }
        }
        let d = s.dims;
        let mut fine = VoxelGrid::new([0.0; 3], s.cs / 2.0, [2 * d[0], 2 * d[1], 2 * d[2]]).unwrap();
        for i in 0..d[0] * d[1] * d[2] {
            let c = unflatten(i, d);
            let class = coarse.get(c);
            for k in 0..8 {
                fine.set([2 * c[0] + (k & 1), 2 * c[1] + (k >> 1 & 1), 2 * c[2] + (k >> 2)], class);
            }
        }
        prop_assert_eq!(fine.los(s.a, s.b), coarse.los(s.a, s.b));
    }

    #[test]
    fn sight_line_inside_one_cell_is_clear(s in scene()) {
        let mut g = s.grid();
        let c = g.cell_of(s.a).unwrap();
        for i in 0..s.occupied.len() {
            g.set(unflatten(i, s.dims), CellClass::Building);
        }
        let lo: [f64; 3] = std::array::from_fn(|i| c[i] as f64 * s.cs);
        let b: [f64; 3] = std::array::from_fn(|i| lo[i] + (s.b[i] / (s.dims[i] as f64 * s.cs)) * s.cs * 0.999);
        prop_assert!(g.los(s.a, b));
    }
}

#[test]
fn wall_blocks_and_gap_passes() {
    let mut g = VoxelGrid::new([0.0; 3], 1.0, [5, 3, 3]).unwrap();
    for y in 0..3 {
        for z in 0..3 {
            g.set([2, y, z], CellClass::Building);
        }
    }
    assert!(!g.los([0.5, 1.5, 1.5], [4.5, 1.5, 1.5]));
    g.set([2, 1, 1], CellClass::Empty);
    assert!(g.los([0.5, 1.5, 1.5], [4.5, 1.5, 1.5]));
    // endpoint cells never block
    assert!(g.los([2.5, 1.5, 1.5], [2.5, 0.5, 1.5]));
}

// Same generator as the acceptance criterion, which compares the exact
// walk with 0.05 m sampling and reports a handful of disagreements.

fn random_scene(rng: &mut ChaCha8Rng) -> VoxelGrid {
    let cs = [0.5, 1.0, 2.0, 5.0][rng.gen_range(0..4)];
    let dims = [rng.gen_range(16..=64), rng.gen_range(16..=64), rng.gen_range(8..=32)];
    let origin = [rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0), 0.0];
    let mut g = VoxelGrid::new(origin, cs, dims).unwrap();
    let classes = [CellClass::Building, CellClass::Canopy, CellClass::Terrain];
    for _ in 0..rng.gen_range(3..12) {
        let lo: [usize; 3] = std::array::from_fn(|a| rng.gen_range(0..dims[a]));
        let hi: [usize; 3] = std::array::from_fn(|a| (lo[a] + rng.gen_range(1..8)).min(dims[a]));
        let class = classes[rng.gen_range(0..3)];
        for x in lo[0]..hi[0] {
            for y in lo[1]..hi[1] {
                for z in lo[2]..hi[2] {
                    g.set([x, y, z], class);
                }
            }
        }
    }
    g
}

fn sample_step(a: [f64; 3], b: [f64; 3], spacing: f64) -> (usize, f64) {
    let len = (0..3).map(|i| (b[i] - a[i]).powi(2)).sum::<f64>().sqrt();
    let n = (len / spacing).ceil().max(1.0) as usize;
    (n, len / n as f64)
}

fn sampled_los(g: &VoxelGrid, a: [f64; 3], b: [f64; 3], spacing: f64) -> bool {
    let (n, _) = sample_step(a, b, spacing);
    let ends = [g.cell_of(a), g.cell_of(b)];
    (0..=n).all(|k| {
        let t = k as f64 / n as f64;
        let p: [f64; 3] = std::array::from_fn(|i| a[i] + (b[i] - a[i]) * t);
        match g.cell_of(p) {
            Some(c) if !ends.contains(&Some(c)) => g.get(c) == CellClass::Empty,
            _ => true,
        }
    })
}

/// Length of segment `a -> b` inside cell `c`, by slab clipping.
fn chord(g: &VoxelGrid, c: CellIndex, a: [f64; 3], b: [f64; 3]) -> f64 {
    let (o, cs) = (g.origin(), g.cell_size());
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..3 {
        let (lo, hi) = (o[i] + c[i] as f64 * cs, o[i] + (c[i] + 1) as f64 * cs);
        let d = b[i] - a[i];
        if d == 0.0 {
            if a[i] < lo || a[i] > hi {
                return 0.0;
            }
            continue;
        }
        let (u, v) = ((lo - a[i]) / d, (hi - a[i]) / d);
        t0 = t0.max(u.min(v));
        t1 = t1.min(u.max(v));
    }
    let len = (0..3).map(|i| (b[i] - a[i]).powi(2)).sum::<f64>().sqrt();
    (t1 - t0).max(0.0) * len
}

#[test]
fn sampling_disagreements_are_grazes_shorter_than_the_step() {
    let mut seen = 0;
    for s in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let g = random_scene(&mut rng);
        let (lo, hi) = (g.origin(), g.max_corner());
        for _ in 0..60 {
            let a: [f64; 3] = std::array::from_fn(|i| rng.gen_range(lo[i]..hi[i]));
            let b: [f64; 3] = std::array::from_fn(|i| rng.gen_range(lo[i]..hi[i]));
            let exact = g.los(a, b);
            if exact == sampled_los(&g, a, b, 0.05) {
                continue;
            }
            seen += 1;
            assert!(!exact, "scene {s}: sampler blocked a line the exact walk clears");
            let ends = [g.cell_of(a), g.cell_of(b)];
            let mut blockers = Vec::new();
            g.walk(a, b, |c| {
                if !ends.contains(&Some(c)) && g.get(c) != CellClass::Empty {
                    blockers.push(c);
                }
                false
            });
            assert!(!blockers.is_empty());
            let (_, step) = sample_step(a, b, 0.05);
            for c in blockers {
                let l = chord(&g, c, a, b);
                assert!(l < step, "scene {s}: chord {l} through {c:?} not shorter than step {step}");
            }
        }
    }
    assert!(seen > 0, "expected the acceptance run's disagreements to reappear");
}
