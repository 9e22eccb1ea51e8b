use drosc::ambiguity::{nearest_mean, DiscreteAmbiguitySet, MeanBallSet, SampleSet};
use drosc::domain::BoxDomain;
use drosc::minimax::{make_state, step_max_p, MinimaxObjective, SolverConfig};
use drosc::Result;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `h(F p)` with a fixed image matrix and `h(v) = ‖v − b‖²`; `x` is a dummy.
struct FixedImage {
    x_box: BoxDomain,
    set: DiscreteAmbiguitySet,
    f: DMatrix<f64>,
    b: DVector<f64>,
}

impl MinimaxObjective for FixedImage {
    fn x_box(&self) -> &BoxDomain {
        &self.x_box
    }
    fn ambiguity(&self) -> &DiscreteAmbiguitySet {
        &self.set
    }
    fn image_dim(&self) -> usize {
        self.f.nrows()
    }
    fn theta(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn image_matrix(&self, _x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.f.clone())
    }
    fn outer(&self, v: &DVector<f64>) -> f64 {
        (v - &self.b).norm_squared()
    }
    fn outer_grad(&self, v: &DVector<f64>) -> DVector<f64> {
        (v - &self.b) * 2.0
    }
}

#[test]
fn three_point_instances_match_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = SolverConfig::default();
    for trial in 0..8 {
        let points: Vec<Vec<f64>> = (0..3)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let samples = SampleSet::new(points, BoxDomain::cube(2, -1.0, 1.0)).unwrap();
        let eta = nearest_mean(&samples, &[0.0, 0.0]).upper + rng.gen_range(0.02..0.4);
        let set = DiscreteAmbiguitySet::new(samples, MeanBallSet::new(vec![0.0, 0.0], eta).unwrap()).unwrap();
        let model = FixedImage {
            x_box: BoxDomain::cube(1, 0.0, 1.0),
            set,
            f: DMatrix::from_fn(2, 3, |_, _| rng.gen_range(0.0..1.0)),
            b: DVector::from_vec(vec![0.5, 0.5]),
        };
        let p0 = model.set.project(&[1.0 / 3.0; 3], None).unwrap();
        let state = make_state(&model, vec![0.5], p0, &cfg).unwrap();
        let (next, improvement) = step_max_p(&model, &state, &cfg).unwrap();
        assert!(improvement >= 0.0);
        assert!(model.set.infeasibility(next.p.as_slice()).unwrap() <= 1e-8);

        let value = |p: &[f64]| model.outer(&(&model.f * DVector::from_column_slice(p)));
        let n = 1000;
        let mut grid = f64::NEG_INFINITY;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let p = [i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64];
                if model.set.member(&p).unwrap() {
                    grid = grid.max(value(&p));
                }
            }
        }
        let got = value(next.p.as_slice());
        assert!((got - grid).abs() <= 1e-4 || got > grid, "trial {trial}: {got} vs grid {grid}");
        assert!((next.max_value - got).abs() < 1e-12);
    }
}
