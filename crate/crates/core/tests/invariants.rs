use haarlab_core::algebra::{gcd, Phase};
use haarlab_core::diffusion::{
    build_example_separating, calca_coefficient, density_report, example_automaton, rank_trajectory, verify_separating,
};
use haarlab_core::lca::{char_power, compose_char, lca_power_coeffs, make_lca, CrtSplit};
use haarlab_core::numtheory::{digit_dominates, gap_census, lucas_binom, p_ary};
use haarlab_core::{Character, Configuration, Endo, Group, GroupElement, Lca, Matrix, Site};
use proptest::prelude::*;

fn z(n: u64) -> Group {
    Group::cyclic(n).unwrap()
}

/// Groups of order at most 16, and a few larger ones for the algebraic identities.
fn small_group() -> impl Strategy<Value = Group> {
    prop_oneof![
        (2u64..=16).prop_map(z),
        Just(Group::prime_power_vector(2, 1, 2).unwrap()),
        Just(Group::prime_power_vector(2, 1, 3).unwrap()),
        Just(Group::prime_power_vector(2, 2, 2).unwrap()),
        Just(Group::prime_power_vector(3, 1, 2).unwrap()),
    ]
}

fn any_group() -> impl Strategy<Value = Group> {
    prop_oneof![
        small_group(),
        (17u64..=60).prop_map(z),
        Just(Group::prime_power_vector(3, 2, 2).unwrap()),
        Just(Group::prime_power_vector(5, 1, 3).unwrap()),
    ]
}

fn element(g: &Group) -> impl Strategy<Value = GroupElement> {
    let g = g.clone();
    (0..g.order().unwrap() as usize).prop_map(move |i| g.element_at(i))
}

fn endo(g: &Group) -> BoxedStrategy<Endo> {
    match *g {
        Group::Cyclic { n } => (0..n).prop_map(Endo::Scalar).boxed(),
        Group::PrimePowerVector { dim, .. } => {
            let q = g.exponent();
            prop::collection::vec(prop::collection::vec(0..q, dim), dim)
                .prop_map(|rows| Endo::Matrix(Matrix::new(rows).unwrap()))
                .boxed()
        }
    }
}

fn lca(g: &Group) -> impl Strategy<Value = Lca> {
    let g = g.clone();
    prop::collection::vec((-2i64..=2, endo(&g)), 1..=3)
        .prop_map(move |terms| make_lca(g.clone(), 1, terms.into_iter().map(|(s, e)| (Site::new1(s), e))).unwrap())
}

fn character(g: &Group) -> impl Strategy<Value = Character> {
    let g = g.clone();
    prop::collection::vec((-3i64..=3, element(&g)), 1..=4)
        .prop_map(move |cs| Character::new(g.clone(), 1, cs.into_iter().map(|(s, c)| (Site::new1(s), c))).unwrap())
}

fn config(g: &Group, len: usize) -> impl Strategy<Value = Configuration> {
    let g = g.clone();
    prop::collection::vec(element(&g), len).prop_map(move |cells| Configuration::from_elements(g.clone(), &cells).unwrap())
}

/// Group, automaton, character and a window long enough for `chi o F^n` with `n <= 8`.
fn pushforward_case() -> impl Strategy<Value = (Group, Lca, Character, u64, Configuration)> {
    any_group().prop_flat_map(|g| {
        (lca(&g), character(&g), 0u64..=8).prop_flat_map(move |(f, chi, n)| {
            let pushed = char_power(&chi, &f, n).unwrap();
            let radius = pushed.support().chain(chi.support()).map(|s| s.x().abs()).max().unwrap_or(0);
            let len = (2 * radius + 1).max(5) as usize;
            (Just(f.group().clone()), Just(f), Just(chi), Just(n), config(pushed.group(), len))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn adjoint_identity(
        (g, f, c, a) in any_group().prop_flat_map(|g| (Just(g.clone()), endo(&g), element(&g), element(&g)))
    ) {
        let lhs = g.pair(&g.endo_apply(&f.adjoint(), &c).unwrap(), &a).unwrap();
        let rhs = g.pair(&c, &g.endo_apply(&f, &a).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn phase_sum_matches_complex_product(a in 0u64..1000, m in 1u64..200, b in 0u64..1000, k in 1u64..200) {
        let (x, y) = (Phase::new(a % m, m), Phase::new(b % k, k));
        let exact = x.add(y).to_complex();
        let float = x.to_complex() * y.to_complex();
        prop_assert!((exact - float).norm() < 1e-12);
    }

    #[test]
    fn automorphism_iff_exhaustive_inverse(
        (g, f) in small_group().prop_flat_map(|g| (Just(g.clone()), endo(&g)))
    ) {
        let id = g.identity_endo();
        let all_endos: Vec<Endo> = match g {
            Group::Cyclic { n } => (0..n).map(Endo::Scalar).collect(),
            Group::PrimePowerVector { dim, .. } => {
                let q = g.exponent();
                let entries = dim * dim;
                (0..q.pow(entries as u32))
                    .map(|mut code| {
                        let mut rows = vec![vec![0; dim]; dim];
                        for e in 0..entries {
                            rows[e / dim][e % dim] = code % q;
                            code /= q;
                        }
                        Endo::Matrix(Matrix::new(rows).unwrap())
                    })
                    .collect()
            }
        };
        let has_inverse = all_endos.iter().any(|h| g.endo_compose(&f, h) == id && g.endo_compose(h, &f) == id);
        prop_assert_eq!(g.is_automorphism(&f), has_inverse);
    }

    #[test]
    fn rank_survives_add_then_subtract(
        (chi, other) in any_group().prop_flat_map(|g| (character(&g), character(&g)))
    ) {
        let back = chi.add(&other).unwrap().sub(&other).unwrap();
        prop_assert_eq!(back.rank(), chi.rank());
        prop_assert_eq!(back, chi);
    }

    #[test]
    fn pushforward_soundness((_g, f, chi, n, a) in pushforward_case()) {
        let lhs = char_power(&chi, &f, n).unwrap().eval(&a).unwrap();
        let rhs = chi.eval(&f.iterate(&a, n as usize).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn shift_commutes(
        (f, chi, e) in any_group().prop_flat_map(|g| (lca(&g), character(&g), -3i64..=3))
    ) {
        let shift = Lca::shift(f.group().clone(), 1, Site::new1(e)).unwrap();
        let lhs = compose_char(&chi, &shift.compose(&f).unwrap()).unwrap();
        let rhs = compose_char(&chi, &f).unwrap().translate(Site::new1(e));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn crt_coherence(
        (chi, a) in prop_oneof![Just(z(6)), Just(z(12))]
            .prop_flat_map(|g| (character(&g), config(&g, 9)))
    ) {
        let whole = chi.eval(&a).unwrap();
        let parts = chi
            .crt_split()
            .iter()
            .zip(a.crt_split())
            .fold(Phase::zero(), |acc, (c, x)| acc.add(c.eval(&x).unwrap()));
        prop_assert_eq!(whole, parts);
    }

    #[test]
    fn crt_rank_bound(
        (f, chi, n) in prop_oneof![Just(z(6)), Just(z(12)), Just(z(30))]
            .prop_flat_map(|g| (lca(&g), character(&g), 0u64..=40))
    ) {
        let whole = char_power(&chi, &f, n).unwrap().rank();
        for (c, fj) in chi.crt_split().iter().zip(f.crt_split()) {
            prop_assert!(whole >= char_power(c, &fj, n).unwrap().rank());
        }
    }

    #[test]
    fn trajectory_matches_power_coefficients(
        (f, chi) in any_group().prop_flat_map(|g| (lca(&g), character(&g)))
    ) {
        prop_assume!(!chi.is_trivial());
        let traj = rank_trajectory(&chi, &f, 32).unwrap();
        for n in 1..=32u64 {
            let via_power = compose_char(&chi, &lca_power_coeffs(&f, n)).unwrap();
            prop_assert_eq!(traj.rank_at(n as usize), via_power.rank());
        }
    }

    #[test]
    fn p_ary_round_trip(n in any::<u64>(), p in prop::sample::select(vec![2u64, 3, 5, 7, 11, 9973])) {
        prop_assert_eq!(p_ary(n, p).unwrap().value(), n as u128);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn char_power_squaring_matches_fold(
        (f, chi) in (2u64..=30).prop_map(z).prop_flat_map(|g| (lca(&g), character(&g)))
    ) {
        let mut cur = chi.clone();
        for n in 1..=64u64 {
            cur = compose_char(&cur, &f).unwrap();
            prop_assert_eq!(&char_power(&chi, &f, n).unwrap(), &cur);
        }
    }
}

#[test]
fn p_ary_round_trip_bulk() {
    let mut x: u64 = 0x9e37_79b9_7f4a_7c15;
    for i in 0..100_000u64 {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        let p = [2u64, 3, 5, 7][i as usize % 4];
        assert_eq!(p_ary(x, p).unwrap().value(), x as u128);
    }
}

#[test]
fn domination_iff_nonvanishing() {
    for p in [2u64, 3, 5, 7] {
        for big in 0..=300u64 {
            for n in 0..=big {
                assert_eq!(digit_dominates(n, big, p).unwrap(), lucas_binom(big, n, p).unwrap() != 0);
            }
        }
    }
}

#[test]
fn census_density_nondecreasing() {
    for (p, gamma, r) in [(2u64, 1usize, 1usize), (2, 2, 1), (2, 1, 2), (3, 1, 1), (3, 1, 2)] {
        let start = (gamma * r + 2 * r) as u32;
        let mut prev = 0.0;
        for l in start..start + 6 {
            let total = p.pow(l);
            let hits = (0..total).filter(|&j| gap_census(j, p, gamma).unwrap().gap_count >= r).count();
            let frac = hits as f64 / total as f64;
            assert!(frac >= prev, "p={p} gamma={gamma} R={r} L={l}: {frac} < {prev}");
            prev = frac;
        }
    }
}

#[test]
fn calca_iff_chained_domination() {
    for p in [2u64, 3] {
        for j in 0..=64u64 {
            for k1 in 0..=64u64 {
                let d1 = digit_dominates(k1, j, p).unwrap();
                assert_eq!(calca_coefficient(j, &[k1], p).unwrap() != 0, d1);
                for k2 in 0..=64u64 {
                    let d2 = d1 && digit_dominates(k2, k1, p).unwrap();
                    assert_eq!(calca_coefficient(j, &[k1, k2], p).unwrap() != 0, d2);
                    for k3 in (0..=64u64).step_by(3) {
                        let d3 = d2 && digit_dominates(k3, k2, p).unwrap();
                        assert_eq!(calca_coefficient(j, &[k1, k2, k3], p).unwrap() != 0, d3);
                    }
                }
            }
        }
    }
}

#[test]
fn counterexample_density_stays_below_three_quarters() {
    let f = make_lca(z(8), 1, [(Site::new1(0), Endo::Scalar(1)), (Site::new1(1), Endo::Scalar(2))]).unwrap();
    let chi = Character::new(z(8), 1, [(Site::new1(0), z(8).element(&[1]).unwrap())]).unwrap();
    let traj = rank_trajectory(&chi, &f, 512).unwrap();
    for n_max in (4..=512).step_by(4) {
        let sub = haarlab_core::diffusion::RankTrajectory { ranks: traj.ranks[..n_max].to_vec(), ..traj.clone() };
        let d = density_report(&sub, &[2]).unwrap()[0].1;
        assert!(d <= 0.75, "N_max = {n_max}: {d}");
    }
}

#[test]
fn separating_certificates_reverify() {
    let mut verified = 0;
    for p in [2u64, 3] {
        let f = example_automaton(p).unwrap();
        for j in 1..400u64 {
            for (v, r) in [(1u64, 1u64), (1, 2), (2, 2)] {
                let Ok(ex) = build_example_separating(j, p, v, r) else { continue };
                if !ex.certificate.verified {
                    continue;
                }
                let power = lca_power_coeffs(&f, 2 * j);
                let again = verify_separating(&power, 2 * j, &ex.certificate.w, &ex.certificate.v).unwrap();
                assert!(again.verified, "p={p} j={j} V={v} R={r}");
                verified += 1;
            }
        }
    }
    assert!(verified > 50, "only {verified} certificates exercised");
}

#[test]
fn scalar_automorphism_is_unit() {
    for n in 2..=40u64 {
        let g = z(n);
        for k in 0..n {
            assert_eq!(g.is_automorphism(&Endo::Scalar(k)), gcd(k, n) == 1);
        }
    }
}
