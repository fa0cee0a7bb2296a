use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;

use metaid::cluster::{kmeans_cosine_rows, ClusterConfig, StopReason};
use metaid::embed::{train_skipgram, SgConfig};
use metaid::graph::{build_graph, Node};
use metaid::idgen::{digit_tokens, IdAssignment, Strategy as IdStrategy};
use metaid::ingest::{build_index, compute_stats, generate_synthetic, split_random, tiny_records, InteractionRecord, SyntheticConfig};
use metaid::metrics::{
    build_similarity_oracle, compute_ds, compute_ms, item_representations, MetricConfig, SimilarityMode, TokenTable,
};
use metaid::promptgen::build_id_trie;
use metaid::rng::seeded;
use metaid::scalar::{cosine, dot};
use metaid::walker::{sample_walks, WalkConfig};
use rand::Rng;
use rand_distr::StandardNormal;

fn records() -> impl Strategy<Value = Vec<InteractionRecord>> {
    prop::collection::vec((0u8..8, 0u8..10, 1u8..=5, -5i64..20), 1..60).prop_map(|rows| {
        rows.into_iter()
            .map(|(u, i, r, t)| InteractionRecord::new(format!("u{u}"), format!("i{i}"), r, t))
            .collect()
    })
}

fn key(r: &InteractionRecord) -> (String, String, u8, i64) {
    (r.user_key.clone(), r.item_key.clone(), r.rating, r.timestamp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_round_trip(recs in records()) {
        let index = build_index(&recs).unwrap();
        let mut a: Vec<_> = recs.iter().map(key).collect();
        let mut b: Vec<_> = index.to_records().iter().map(key).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
        for u in 0..index.user_count() {
            let ts: Vec<i64> = index.sequence(u).map(|it| it.timestamp).collect();
            prop_assert!(ts.windows(2).all(|w| w[0] <= w[1]));
        }
        let s = compute_stats(&index);
        let brute = 100.0 * recs.len() as f64 / (index.user_count() * index.item_count()) as f64;
        prop_assert!((s.sparsity_percent - brute).abs() <= 1e-12 * brute);
    }

    #[test]
    fn random_split_covers_everyone(recs in records(), seed in any::<u64>()) {
        let index = build_index(&recs).unwrap();
        if let Ok(s) = split_random(&index, (0.8, 0.1, 0.1), seed) {
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..recs.len()).collect::<Vec<_>>());
            let users: HashSet<u32> = s.train.iter().map(|&id| index.interactions[id].user).collect();
            let items: HashSet<u32> = s.train.iter().map(|&id| index.interactions[id].item).collect();
            prop_assert_eq!(users.len(), index.user_count());
            prop_assert_eq!(items.len(), index.item_count());
        }
    }

    #[test]
    fn graph_is_symmetric_and_conserves_degree(recs in records()) {
        let index = build_index(&recs).unwrap();
        let g = build_graph(&index);
        for it in &index.interactions {
            let items = g.rating_neighbors(Node::User(it.user), it.rating).unwrap();
            let users = g.rating_neighbors(Node::Item(it.item), it.rating).unwrap();
            prop_assert!(items.contains(&it.item) && users.contains(&it.user));
        }
        for u in 0..index.user_count() {
            prop_assert_eq!(g.degree(Node::User(u as u32)), index.per_user_sequence[u].len());
        }
    }

    #[test]
    fn walks_follow_fixed_rating_edges(recs in records(), seed in any::<u64>()) {
        let index = build_index(&recs).unwrap();
        let g = build_graph(&index);
        let cfg = WalkConfig { walk_length: 7, rounds_per_node: 2, seed };
        let corpus = sample_walks(&g, &cfg).unwrap();
        let active = (0..g.node_count()).filter(|&id| g.degree(Node::from_global(id, g.user_count())) > 0).count();
        prop_assert!(corpus.walks.len() <= active * 5 * cfg.rounds_per_node);
        for w in &corpus.walks {
            // some rating level must carry every step of the walk
            let fits = (1..=5u8).any(|r| {
                w.windows(2).all(|p| {
                    let (a, b) = (corpus.node(p[0]), corpus.node(p[1]));
                    let target = match b { Node::User(x) | Node::Item(x) => x };
                    g.rating_neighbors(a, r).unwrap().contains(&target)
                })
            });
            prop_assert!(fits);
        }
    }

    #[test]
    fn ds_is_nonnegative_and_symmetric(vals in prop::collection::vec(-3.0f64..3.0, 12)) {
        let reps: Vec<Vec<f64>> = vals.chunks(3).map(<[f64]>::to_vec).collect();
        let cfg = MetricConfig { pair_samples: 100, ..Default::default() };
        let ds = compute_ds(&reps, &cfg).unwrap();
        prop_assert!(ds >= 0.0);
        let mut rev = reps.clone();
        rev.reverse();
        prop_assert!((compute_ds(&rev, &cfg).unwrap() - ds).abs() < 1e-12);
        let shifted: Vec<Vec<f64>> = reps.iter().map(|_| reps[0].iter().map(|x| x + 1.5).collect()).collect();
        prop_assert!(compute_ds(&shifted, &cfg).unwrap().abs() < 1e-12);
    }

    #[test]
    fn digits_concatenate_back(n in 0u64..10_000_000) {
        let toks = digit_tokens(n);
        prop_assert_eq!(toks.concat(), n.to_string());
        prop_assert!(toks.iter().skip(1).all(|t| t.len() == 2));
    }

    #[test]
    fn trie_paths_are_the_item_ids(ids in prop::collection::btree_set(prop::collection::vec(0u8..4, 1..5), 1..30)) {
        let item_ids: Vec<Vec<String>> = ids.iter().map(|s| s.iter().map(|d| d.to_string()).collect()).collect();
        let a = IdAssignment::new(IdStrategy::Rid, vec![], item_ids.clone()).unwrap();
        let trie = build_id_trie(&a).unwrap();
        let paths: BTreeSet<Vec<String>> = trie.paths().into_iter().map(|(p, _)| p).collect();
        prop_assert_eq!(paths, item_ids.into_iter().collect::<BTreeSet<_>>());
    }

    #[test]
    fn kmeans_converged_assignment_is_locally_optimal(vals in prop::collection::vec(-1.0f64..1.0, 24..60), groups in 1usize..4, seed in any::<u64>()) {
        let n = vals.len() / 3;
        let data = &vals[..n * 3];
        let cfg = ClusterConfig { groups, seed, ..Default::default() };
        let Ok(model) = kmeans_cosine_rows(data, 3, &cfg) else { return Ok(()); };
        for g in 0..groups {
            let members: Vec<usize> = (0..n).filter(|&p| model.assignment[p] == g).collect();
            for k in 0..3 {
                let mean = members.iter().map(|&p| data[3 * p + k]).sum::<f64>() / members.len() as f64;
                prop_assert!((mean - model.centroids[g][k]).abs() < 1e-9);
            }
        }
        if model.stop == StopReason::Stable {
            for p in 0..n {
                let own = model.cosine_distance(&data[3 * p..3 * p + 3], model.assignment[p]);
                for g in 0..groups {
                    prop_assert!(model.cosine_distance(&data[3 * p..3 * p + 3], g) >= own - 1e-12);
                }
            }
        }
        prop_assert_eq!(kmeans_cosine_rows(data, 3, &cfg).unwrap(), model);
    }
}

#[test]
fn walks_ignore_worker_count() {
    let index = build_index(
        &generate_synthetic(&SyntheticConfig {
            blocks: 3,
            users_per_block: 10,
            items_per_block: 10,
            cross_block_noise: 0.1,
            seed: 1,
        })
        .unwrap(),
    )
    .unwrap();
    let g = build_graph(&index);
    let cfg = WalkConfig { walk_length: 12, rounds_per_node: 3, seed: 5 };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample_walks(&g, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn tiny_loss_drops() {
    let g = build_graph(&build_index(&tiny_records()).unwrap());
    let corpus = sample_walks(&g, &WalkConfig { walk_length: 16, rounds_per_node: 8, seed: 1 }).unwrap();
    let t = train_skipgram::<f64>(&corpus, &SgConfig { dim: 16, seed: 1, ..Default::default() }).unwrap();
    assert!(t.epoch_loss[9] < t.epoch_loss[0], "{:?}", t.epoch_loss);
}

#[test]
fn blocks_separate_in_embedding_space() {
    let synth = SyntheticConfig {
        blocks: 2,
        users_per_block: 20,
        items_per_block: 20,
        cross_block_noise: 0.0,
        seed: 3,
    };
    let index = build_index(&generate_synthetic(&synth).unwrap()).unwrap();
    let corpus = sample_walks(&build_graph(&index), &WalkConfig { walk_length: 32, rounds_per_node: 8, seed: 3 }).unwrap();
    let table = train_skipgram::<f64>(&corpus, &SgConfig { dim: 16, seed: 3, ..Default::default() }).unwrap().table;
    let block = |i: usize| synth.item_block(index.item_names[i][1..].parse().unwrap());
    let (mut within, mut across) = (Vec::new(), Vec::new());
    for i in 0..index.item_count() {
        for j in i + 1..index.item_count() {
            let c = cosine(table.item(i), table.item(j)).unwrap();
            if block(i) == block(j) { within.push(c) } else { across.push(c) }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&within) > mean(&across), "{} vs {}", mean(&within), mean(&across));
}

/// META representations beat random ones on memorization for every seed.
#[test]
fn meta_memorizes_better_than_random() {
    for seed in 0..5u64 {
        let synth = SyntheticConfig {
            blocks: 2,
            users_per_block: 50,
            items_per_block: 50,
            cross_block_noise: 0.05,
            seed,
        };
        let index = build_index(&generate_synthetic(&synth).unwrap()).unwrap();
        let corpus = sample_walks(&build_graph(&index), &WalkConfig { walk_length: 32, rounds_per_node: 4, seed }).unwrap();
        let sg = SgConfig { dim: 32, seed, ..Default::default() };
        let table = train_skipgram::<f64>(&corpus, &sg).unwrap().table;
        let model = metaid::cluster::kmeans_cosine(&table, &ClusterConfig { groups: 2, seed, ..Default::default() }).unwrap();
        let model = metaid::cluster::rank_within_cluster(model, &table);
        let (a, vocab) = metaid::idgen::assign_meta_ids(&model, &index).unwrap();
        let vocab = metaid::idgen::build_f_init(&model, vocab, 0.1, seed).unwrap();
        let reps = item_representations(&a, &TokenTable::from_vocabulary(&vocab)).unwrap();
        let oracle = build_similarity_oracle(&index);
        let cfg = MetricConfig { item_samples: 100, similarity: SimilarityMode::Exact, seed, ..Default::default() };
        let mut rng = seeded(seed + 100);
        let random: Vec<Vec<f64>> = (0..100).map(|_| (0..32).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let meta_ms = compute_ms(&reps, &oracle, &cfg).unwrap().ms;
        let random_ms = compute_ms(&random, &oracle, &cfg).unwrap().ms;
        assert!(meta_ms < random_ms, "seed {seed}: {meta_ms} vs {random_ms}");
    }
}

#[test]
fn token_mean_lies_between_tokens() {
    let a = IdAssignment::new(IdStrategy::Meta, vec![], vec![vec!["p".into(), "q".into()]]).unwrap();
    let t = TokenTable::from_rows(vec!["p".into(), "q".into()], 2, vec![2.0f64, 0.0, 0.0, 2.0]).unwrap();
    let e = item_representations(&a, &t).unwrap();
    assert_eq!(dot(&e[0], &[1.0, 1.0]), 2.0);
}
