use num_complex::Complex64;
use patchsurr::circuit::{random_circuit, RandomCircuitConfig};
use patchsurr::state::Statevector;
use patchsurr::surrogate::{numeric_value, SurrogateEvaluator};
use patchsurr::{
    backpropagate, exact_expectation, InitialState, Letter, Mode, ObservableSpec, PauliString, PropagatedObservable,
    TruncationPolicy,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Mat = Vec<Vec<Complex64>>;

fn letter_matrix(l: Letter) -> Mat {
    let (o, i, n) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0));
    match l {
        Letter::I => vec![vec![i, o], vec![o, i]],
        Letter::X => vec![vec![o, i], vec![i, o]],
        Letter::Y => vec![vec![o, -n], vec![n, o]],
        Letter::Z => vec![vec![i, o], vec![o, -i]],
    }
}

fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ra, rb) = (a.len(), b.len());
    let mut out = vec![vec![Complex64::new(0.0, 0.0); ra * rb]; ra * rb];
    for i in 0..ra {
        for j in 0..ra {
            for k in 0..rb {
                for l in 0..rb {
                    out[i * rb + k][j * rb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let d = a.len();
    (0..d)
        .map(|i| (0..d).map(|j| (0..d).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

fn dense(p: &PauliString) -> Mat {
    p.letters().fold(vec![vec![Complex64::new(1.0, 0.0)]], |acc, l| kron(&acc, &letter_matrix(l)))
}

fn close(a: &Mat, b: &Mat) -> bool {
    a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| (x - y).norm() < 1e-12)
}

fn pauli_text(n: usize) -> impl Strategy<Value = String> {
    proptest::collection::vec(prop_oneof![Just('I'), Just('X'), Just('Y'), Just('Z')], n)
        .prop_map(|v| v.into_iter().collect())
}

fn random_problem(seed: u64, share_prob: f64) -> (patchsurr::Circuit, ObservableSpec, InitialState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=5);
    let cfg = RandomCircuitConfig {
        n,
        rotations: rng.gen_range(1..=10),
        cliffords_per_rotation: 1.0,
        max_generator_weight: 3,
        share_prob,
    };
    let c = random_circuit(&cfg, &mut rng);
    let q = rng.gen_range(0..n);
    let obs = ObservableSpec::new(
        n,
        vec![
            (PauliString::single(n, q, Letter::Z), 0.8),
            (PauliString::single(n, (q + 1) % n, Letter::X), -0.4),
        ],
    )
    .unwrap();
    let amps: Vec<Complex64> = (0..1usize << n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let sv = Statevector::from_amplitudes(amps.into_iter().map(|a| a / norm).collect()).unwrap();
    (c, obs, InitialState::dense(sv).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn multiply_matches_dense_product(a in pauli_text(3), b in pauli_text(3)) {
        let (pa, pb) = (PauliString::from_letters(&a).unwrap(), PauliString::from_letters(&b).unwrap());
        let (phase, prod) = pa.multiply(&pb).unwrap();
        let lhs = matmul(&dense(&pa), &dense(&pb));
        let rhs: Mat = dense(&prod).into_iter().map(|row| row.into_iter().map(|x| x * phase.to_complex()).collect()).collect();
        prop_assert!(close(&lhs, &rhs));
    }

    #[test]
    fn commutation_matches_dense(a in pauli_text(3), b in pauli_text(3)) {
        let (pa, pb) = (PauliString::from_letters(&a).unwrap(), PauliString::from_letters(&b).unwrap());
        let (ma, mb) = (dense(&pa), dense(&pb));
        prop_assert_eq!(pa.commutes(&pb).unwrap(), close(&matmul(&ma, &mb), &matmul(&mb, &ma)));
    }

    #[test]
    fn untruncated_symbolic_matches_dense(seed in any::<u64>(), share in prop_oneof![Just(0.0), Just(0.5)], x in -3.0f64..3.0) {
        let (c, obs, state) = random_problem(seed, share);
        let po = backpropagate(&c, &obs, &TruncationPolicy::exact(), Mode::Symbolic, None).unwrap();
        let alpha: Vec<f64> = (0..c.num_params()).map(|i| x * (i as f64 + 1.0).sin()).collect();
        let v = SurrogateEvaluator::new(&po, &state).unwrap().evaluate(&alpha).unwrap();
        let e = exact_expectation(&c, &alpha, &obs, &state).unwrap();
        prop_assert!((v - e).abs() < 1e-10, "{} vs {}", v, e);
    }

    #[test]
    fn exact_propagation_preserves_coefficient_norm(seed in any::<u64>(), x in -3.0f64..3.0) {
        let (c, obs, _) = random_problem(seed, 0.3);
        let alpha = vec![x; c.num_params()];
        let po = backpropagate(&c, &obs, &TruncationPolicy::exact(), Mode::Numeric, Some(&alpha)).unwrap();
        let sq: f64 = po.coeffs_at(&[]).unwrap().iter().map(|c| c * c).sum();
        prop_assert!((sq - 0.8f64.powi(2) - 0.4f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn truncation_only_removes_weight(seed in any::<u64>(), kappa in 0u32..4) {
        let (c, obs, _) = random_problem(seed, 0.0);
        let full = backpropagate(&c, &obs, &TruncationPolicy::exact(), Mode::Symbolic, None).unwrap();
        let cut = backpropagate(&c, &obs, &TruncationPolicy::kappa(kappa), Mode::Symbolic, None).unwrap();
        prop_assert!(cut.num_paulis() <= full.num_paulis());
        prop_assert!(cut.terms().iter().all(|t| full.terms().iter().any(|f| f.pauli == t.pauli)));
    }

    #[test]
    fn artifact_json_round_trip(seed in any::<u64>()) {
        let (c, obs, state) = random_problem(seed, 0.2);
        let po = backpropagate(&c, &obs, &TruncationPolicy::kappa(2), Mode::Symbolic, None).unwrap();
        let back = PropagatedObservable::from_json(&po.to_json()).unwrap();
        let alpha = vec![0.05; c.num_params()];
        let a = SurrogateEvaluator::new(&po, &state).unwrap().evaluate(&alpha).unwrap();
        let b = SurrogateEvaluator::new(&back, &state).unwrap().evaluate(&alpha).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn numeric_value_of_identity_is_coefficient() {
    let obs = ObservableSpec::new(3, vec![(PauliString::identity(3), 0.25)]).unwrap();
    let c = patchsurr::Circuit::new(3, 0, vec![]).unwrap();
    let po = backpropagate(&c, &obs, &TruncationPolicy::exact(), Mode::Numeric, Some(&[])).unwrap();
    assert_eq!(numeric_value(&po, &InitialState::AllPlus(3)).unwrap(), 0.25);
}
