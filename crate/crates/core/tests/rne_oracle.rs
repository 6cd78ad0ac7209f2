use icsg::nonzerosum::{solve_indexed, NzOutcome, NzStage};
use icsg::oracle::{oracle_rne_check, oracle_stage_check, random_tiny_icsg, TinyGameSpec};
use icsg::property::{Objective, Semantics};
use icsg::zerosum::SolveOptions;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn objectives(seed: u64) -> [Objective; 2] {
    let pick = |bit: u64, target: &str, reward: &str, k: usize| {
        if seed >> bit & 1 == 0 {
            Objective::BoundedReach {
                target: target.into(),
                k,
            }
        } else {
            Objective::BoundedCumulative {
                reward: reward.into(),
                k,
            }
        }
    };
    let k1 = 1 + (seed % 3) as usize;
    let k2 = 1 + (seed / 3 % 2) as usize;
    [pick(0, "goal", "r", k1), pick(1, "goal2", "r2", k2)]
}

#[test]
fn synthesized_profiles_pass_the_definition_check() {
    let mut solved = 0;
    let mut tried = 0;
    let mut seed = 0u64;
    while solved < 50 {
        assert!(tried < 2000, "only {solved} solvable instances in {tried}");
        let m = random_tiny_icsg(&TinyGameSpec::with_seed(seed));
        let objs = objectives(seed);
        seed += 1;
        tried += 1;
        let NzOutcome::Solved(sol) = solve_indexed(&m, &objs, &SolveOptions::default()).unwrap()
        else {
            continue;
        };
        solved += 1;
        let verdict = oracle_rne_check(
            &m,
            &objs,
            |step, s, reached| {
                sol.profile_at(step, s, reached)
                    .map(|(x, y)| (x.to_vec(), y.to_vec()))
            },
            sol.epsilon,
        )
        .unwrap();
        assert!(verdict.holds, "seed {}: {:?}", seed - 1, verdict.worst);
    }
    eprintln!("{solved} of {tried} instances solved");
}

#[test]
fn one_shot_filter_matches_exhaustive_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut compared = 0;
    let mut rejected = 0;
    let mut seed = 1000u64;
    while compared < 50 {
        let m = random_tiny_icsg(&TinyGameSpec {
            width: (0.05, 0.3),
            ..TinyGameSpec::with_seed(seed)
        });
        seed += 1;
        let n = m.num_states();
        let v: [Vec<f64>; 2] = [0, 1].map(|_| (0..n).map(|_| rng.gen_range(0.0..2.0)).collect());
        let stage =
            NzStage::from_values(&m, 0, [&v[0], &v[1]], [None, None], Semantics::Adversarial)
                .unwrap();
        let eps = if compared % 2 == 0 { 0.0 } else { 0.05 };
        let cands = stage.equilibria(eps).unwrap();
        for c in stage.filter_rne(&m, cands, eps) {
            let check =
                oracle_stage_check(&m, 0, [&v[0], &v[1]], [None, None], &c.profile, eps).unwrap();
            for l in 0..2 {
                assert!(
                    (check.gains[l] - c.gains[l]).abs() <= 1e-8,
                    "seed {}: {:?} vs {:?}",
                    seed - 1,
                    check.gains,
                    c.gains
                );
            }
            assert_eq!(check.accepted, c.accepted);
            rejected += usize::from(!c.accepted);
        }
        compared += 1;
    }
    eprintln!("rejected {rejected}");
}
