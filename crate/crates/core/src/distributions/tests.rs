use super::*;
use crate::rng::stream_rng;
use proptest::prelude::*;

fn brute_force_certificate(dist: &EventDistribution, blocks: &BlockStructure) -> Vec<f64> {
    let support = dist.enumerate().unwrap();
    let theta = dist.marginals();
    (0..dist.m())
        .map(|t| {
            let outside = blocks.complement(t);
            let mut worst: f64 = 0.0;
            for point in &support {
                let assignment: Vec<(usize, u8)> =
                    outside.iter().map(|&j| (j, point.outcome.get(j))).collect();
                let q = ConditionalQuery::new(t, assignment).unwrap();
                worst = worst.max((theta[t] - dist.conditional_mean(&q).unwrap()).abs());
            }
            worst
        })
        .collect()
}

#[test]
fn enumeration_sums_to_one_for_every_family() {
    let dists = vec![
        EventDistribution::independent(&[0.1, 0.5, 0.9]).unwrap(),
        EventDistribution::disjoint_blocks(&[vec![0, 2], vec![1]], &[0.3, 0.7]).unwrap(),
        EventDistribution::random_bias(4, &[0.25, 0.75], &[0.5, 0.5]).unwrap(),
        EventDistribution::hidden_coin_groups(6, 2, 0.1).unwrap(),
        EventDistribution::election(&[2, 3], &[0.4, 0.6, 0.5, 0.2, 0.8], 0.1, 0.5).unwrap(),
    ];
    for d in dists {
        let support = d.enumerate().unwrap();
        let total: f64 = support.iter().map(|p| p.prob).sum();
        assert!(
            (total - 1.0).abs() < 1e-12,
            "{}: {total}",
            d.family().name()
        );
        for t in 0..d.m() {
            let marginal: f64 = support
                .iter()
                .filter(|p| p.outcome.get(t) == 1)
                .map(|p| p.prob)
                .sum();
            assert!((marginal - d.marginals()[t]).abs() < 1e-12);
        }
    }
}

#[test]
fn random_bias_conditional_on_three_ones() {
    let d = EventDistribution::random_bias(4, &[0.25, 0.75], &[0.5, 0.5]).unwrap();
    let q = ConditionalQuery::new(3, vec![(0, 1), (1, 1), (2, 1)]).unwrap();
    assert!((d.conditional_mean(&q).unwrap() - 41.0 / 56.0).abs() < 1e-14);
    assert!((d.blocks().c() - 13.0 / 56.0).abs() < 1e-14);
    assert_eq!(d.blocks().b(), 1);
}

#[test]
fn hidden_coin_marginals_and_certified_slack() {
    let d = EventDistribution::hidden_coin_groups(6, 2, 0.1).unwrap();
    for &th in d.marginals() {
        assert!((th - 0.5).abs() < 1e-15);
    }
    let expected = 0.1 * 0.2 / 0.52;
    assert!(
        (d.blocks().c() - expected).abs() < 1e-14,
        "{}",
        d.blocks().c()
    );
    assert_eq!(d.blocks().b(), 2);
}

#[test]
fn independent_and_disjoint_blocks_declare_zero_slack() {
    let d = EventDistribution::independent(&[0.2, 0.3]).unwrap();
    assert_eq!((d.blocks().b(), d.blocks().c()), (1, 0.0));
    let d = EventDistribution::disjoint_blocks(&[vec![0, 1, 2], vec![3]], &[0.3, 0.7]).unwrap();
    assert_eq!((d.blocks().b(), d.blocks().c()), (3, 0.0));
}

#[test]
fn fast_certification_matches_brute_force() {
    let dists = vec![
        EventDistribution::hidden_coin_groups(6, 2, 0.1).unwrap(),
        EventDistribution::hidden_coin_groups(6, 3, 0.3).unwrap(),
        EventDistribution::election(&[2, 3, 1], &[0.4, 0.6, 0.5, 0.2, 0.8, 0.55], 0.15, 0.5)
            .unwrap(),
        EventDistribution::random_bias(5, &[0.2, 0.5, 0.9], &[0.3, 0.3, 0.4]).unwrap(),
    ];
    for d in dists {
        let cert = certify_block_correlation(&d, d.blocks()).unwrap();
        let brute = brute_force_certificate(&d, d.blocks());
        for (a, b) in cert.per_event.iter().zip(&brute) {
            assert!((a - b).abs() < 1e-12, "{}: {a} vs {b}", d.family().name());
        }
        // Singleton blocks are a different, harder structure.
        let singles = BlockStructure::singletons(d.m(), 0.0).unwrap();
        let cert = certify_block_correlation(&d, &singles).unwrap();
        let brute = brute_force_certificate(&d, &singles);
        for (a, b) in cert.per_event.iter().zip(&brute) {
            assert!(
                (a - b).abs() < 1e-12,
                "{} singletons: {a} vs {b}",
                d.family().name()
            );
        }
    }
}

#[test]
fn with_blocks_rejects_understated_slack() {
    let d = EventDistribution::hidden_coin_groups(4, 2, 0.2).unwrap();
    assert!(d.clone().with_declared_bounds(2, 0.01).is_err());
    assert!(d.with_declared_bounds(3, 0.2).is_ok());
}

#[test]
fn certification_beyond_the_cap_uses_the_latent_bound() {
    let d = EventDistribution::random_bias(40, &[0.2, 0.5, 0.8], &[1.0, 1.0, 1.0]).unwrap();
    assert!((d.blocks().c() - 0.3).abs() < 1e-12);
}

#[test]
fn large_hidden_coin_certifies_exactly() {
    let d = EventDistribution::hidden_coin_groups(512, 4, 0.1).unwrap();
    let c = d.blocks().c();
    assert!(c > 0.09 && c < 0.1, "{c}");
}

#[test]
fn sample_frequencies_match_marginals() {
    let d = EventDistribution::election(&[3, 2], &[0.3, 0.5, 0.7, 0.4, 0.9], 0.1, 0.6).unwrap();
    let mut rng = stream_rng(11, 0);
    let n = 200_000;
    let mut counts = vec![0u64; d.m()];
    for _ in 0..n {
        let y = d.sample(&mut rng);
        for (t, c) in counts.iter_mut().enumerate() {
            *c += y.get(t) as u64;
        }
    }
    for (t, &c) in counts.iter().enumerate() {
        let th = d.marginals()[t];
        let se = (th * (1.0 - th) / n as f64).sqrt();
        assert!(((c as f64 / n as f64) - th).abs() < 5.0 * se);
    }
}

#[test]
fn zero_probability_conditioning_is_an_error() {
    let d = EventDistribution::disjoint_blocks(&[vec![0, 1]], &[0.5]).unwrap();
    let q = ConditionalQuery::new(0, vec![(1, 1)]).unwrap();
    assert_eq!(d.conditional_mean(&q).unwrap(), 1.0);
    assert!(matches!(
        d.conditional_probability(&[(0, 1)], &[(0, 0), (1, 1)]),
        Err(ArenaError::ZeroProbabilityConditioning)
    ));
}

#[test]
fn table_round_trip() {
    let d = parse_table("# two events\n10 0.25\n01 0.25\n11 0.5\n").unwrap();
    assert_eq!(d.m(), 2);
    assert!((d.marginals()[0] - 0.75).abs() < 1e-15);
    assert!((d.marginals()[1] - 0.75).abs() < 1e-15);
    assert_eq!(d.blocks().b(), 2);
    assert!(parse_table("10 0.5\n01 0.4\n").is_err());
    assert!(matches!(
        parse_table("1x 1.0"),
        Err(ArenaError::Parse { line: 1, .. })
    ));
}

proptest! {
    #[test]
    fn election_certificate_agrees_with_brute_force(
        base in proptest::collection::vec(0.05f64..0.95, 5),
        shift in 0.0f64..0.3,
        coupling in 0.0f64..1.0,
    ) {
        let d = EventDistribution::election(&[2, 3], &base, shift, coupling).unwrap();
        let cert = certify_block_correlation(&d, d.blocks()).unwrap();
        let brute = brute_force_certificate(&d, d.blocks());
        for (a, b) in cert.per_event.iter().zip(&brute) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}
