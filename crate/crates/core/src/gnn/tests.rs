use proptest::prelude::*;

use super::layers::*;
use super::*;
use crate::graph::{build_graph, Relation};
use crate::numeric::{grad_check_many, Rng, Tape, Tensor, Var};
use crate::scenario::{generate_synthetic, SynthConfig};
use crate::training::batch_graphs;

fn t(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn random(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.range(-1.0, 1.0)).collect(),
    )
    .unwrap()
}

fn params(
    kind: BlockKind,
    layers: usize,
    hidden: usize,
    variant: Option<crate::graph::Variant>,
) -> ModelSpec {
    let preset = match kind {
        BlockKind::Gcn => Preset::Gcn,
        BlockKind::Gat => Preset::Gat,
        BlockKind::Rgcn => Preset::Rgcn,
        BlockKind::Ggnn => Preset::Ggnn,
    };
    preset
        .build(&PresetParams {
            layers,
            hidden,
            heads: 2,
            final_heads: 2,
            alpha: 0.2,
            dropout: 0.0,
            variant,
        })
        .unwrap()
}

fn synthetic_graphs(n: u64, variant: crate::graph::Variant) -> Vec<crate::graph::Graph> {
    (0..n)
        .map(|s| {
            build_graph(
                &generate_synthetic(s, &SynthConfig::default()).unwrap(),
                variant,
            )
            .unwrap()
        })
        .collect()
}

/// Random typed graph with features in [-1, 1], a few random edges and all
/// self-loops.
fn random_graph(rng: &mut Rng, variant: crate::graph::Variant, n: usize) -> crate::graph::Graph {
    use crate::graph::{Graph, NodeType};
    let kinds = [
        NodeType::Robot,
        NodeType::Room,
        NodeType::Wall,
        NodeType::Human,
        NodeType::Object,
    ];
    let mut edges: Vec<(usize, usize)> = (0..2 * n)
        .map(|_| (rng.below(n as u64) as usize, rng.below(n as u64) as usize))
        .filter(|(s, r)| s != r)
        .collect();
    let mut relations: Vec<Relation> = edges
        .iter()
        .map(|_| Relation::ALL[1 + rng.below(Relation::COUNT as u64 - 1) as usize])
        .collect();
    edges.extend((0..n).map(|i| (i, i)));
    relations.extend(std::iter::repeat_n(Relation::SelfLoop, n));
    if variant == crate::graph::Variant::Unlabelled {
        relations.clear();
    }
    Graph {
        variant,
        node_types: (0..n).map(|_| kinds[rng.below(5) as usize]).collect(),
        features: random(rng, &[n, variant.feature_width()]),
        edges,
        relations,
        robot_index: 0,
        label: Some(rng.uniform()),
    }
}

#[test]
fn gcn_hand_example() {
    let ctx = GraphCtx::from_parts(2, &[0, 0, 1], &[1, 0, 1], &[]);
    let tape = Tape::new();
    let h = tape.constant(t(&[&[1.0], &[2.0]]));
    let w = GcnWeights {
        weight: tape.constant(t(&[&[1.0], &[1.0]])),
        bias: tape.constant(Tensor::zeros(&[1])),
    };
    let out = gcn_layer(&ctx, h, &w, false).unwrap();
    assert_eq!(out.value().data(), &[2.0, 5.0]);
}

#[test]
fn gcn_identity_and_zero_maps() {
    let ctx = GraphCtx::from_parts(1, &[0], &[0], &[]);
    let tape = Tape::new();
    let h = tape.constant(t(&[&[-3.0]]));
    let bias = tape.constant(Tensor::zeros(&[1]));
    let pass = GcnWeights {
        weight: tape.constant(t(&[&[0.0], &[1.0]])),
        bias,
    };
    assert_eq!(
        gcn_layer(&ctx, h, &pass, false).unwrap().value().data(),
        &[-3.0]
    );
    let zero = GcnWeights {
        weight: tape.constant(Tensor::zeros(&[2, 1])),
        bias,
    };
    assert_eq!(
        gcn_layer(&ctx, h, &zero, false).unwrap().value().data(),
        &[0.0]
    );
}

#[test]
fn gat_singleton_attends_to_itself() {
    let mut rng = Rng::new(3);
    let ctx = GraphCtx::from_parts(1, &[0], &[0], &[]);
    let tape = Tape::new();
    let v = random(&mut rng, &[1, 4]);
    let wt = random(&mut rng, &[4, 6]);
    let h = tape.constant(v.clone());
    let w = GatWeights {
        weight: tape.constant(wt.clone()),
        attn_src: (0..2)
            .map(|_| tape.constant(random(&mut rng, &[3, 1])))
            .collect(),
        attn_dst: (0..2)
            .map(|_| tape.constant(random(&mut rng, &[3, 1])))
            .collect(),
        bias: tape.constant(Tensor::zeros(&[6])),
    };
    let out = gat_layer(&ctx, h, &w, 0.2, HeadMode::Concat).unwrap();
    let expected = tape.constant(v).matmul(tape.constant(wt)).unwrap();
    assert!(out.value().max_abs_diff(&expected.value()) < 1e-15);
}

#[test]
fn gat_zero_attention_is_mean_of_projected_neighbours() {
    let mut rng = Rng::new(4);
    // node 2 receives from 0, 1 and itself
    let (src, dst) = ([0, 1, 2, 0, 1], [2, 2, 2, 0, 1]);
    let ctx = GraphCtx::from_parts(3, &src, &dst, &[]);
    let tape = Tape::new();
    let v = random(&mut rng, &[3, 2]);
    let wt = random(&mut rng, &[2, 3]);
    let w = GatWeights {
        weight: tape.constant(wt.clone()),
        attn_src: vec![tape.constant(Tensor::zeros(&[3, 1]))],
        attn_dst: vec![tape.constant(Tensor::zeros(&[3, 1]))],
        bias: tape.constant(Tensor::zeros(&[3])),
    };
    let out = gat_layer(&ctx, tape.constant(v.clone()), &w, 0.2, HeadMode::Average).unwrap();
    let z = tape.constant(v).matmul(tape.constant(wt)).unwrap().tensor();
    for c in 0..3 {
        let mean = (z.get(0, c) + z.get(1, c) + z.get(2, c)) / 3.0;
        assert!((out.value().get(2, c) - mean).abs() < 1e-15);
        assert!((out.value().get(0, c) - z.get(0, c)).abs() < 1e-15);
    }
}

fn relation_weights<'t>(
    tape: &'t Tape,
    rng: &mut Rng,
    d: usize,
    out: usize,
    zero: bool,
) -> Vec<Var<'t>> {
    (0..Relation::COUNT)
        .map(|_| {
            tape.constant(if zero {
                Tensor::zeros(&[d, out])
            } else {
                random(rng, &[d, out])
            })
        })
        .collect()
}

#[test]
fn rgcn_with_zero_relation_weights_is_self_only() {
    let mut rng = Rng::new(5);
    let rels = [Relation::HumanRobot, Relation::SelfLoop, Relation::SelfLoop];
    let ctx = GraphCtx::from_parts(2, &[1, 0, 1], &[0, 0, 1], &rels);
    let tape = Tape::new();
    let v = tape.constant(random(&mut rng, &[2, 3]));
    let ws = tape.constant(random(&mut rng, &[3, 2]));
    let b = tape.constant(random(&mut rng, &[2]));
    let w = RgcnWeights {
        self_weight: ws,
        bias: b,
        relation_weights: relation_weights(&tape, &mut rng, 3, 2, true),
    };
    let out = rgcn_layer(&ctx, v, &w, true, true).unwrap();
    let expected = v.linear(ws, b).unwrap().relu();
    assert!(out.value().max_abs_diff(&expected.value()) < 1e-15);
}

#[test]
fn rgcn_mean_normalization_ignores_duplicate_sources() {
    let mut rng = Rng::new(6);
    let v = random(&mut rng, &[3, 2]);
    // nodes 1 and 2 carry the same features
    let v = Tensor::from_rows(&[v.row(0).to_vec(), v.row(1).to_vec(), v.row(1).to_vec()]).unwrap();
    let tape = Tape::new();
    let w = RgcnWeights {
        self_weight: tape.constant(random(&mut rng, &[2, 2])),
        bias: tape.constant(Tensor::zeros(&[2])),
        relation_weights: relation_weights(&tape, &mut rng, 2, 2, false),
    };
    let h = tape.constant(v);
    let one = GraphCtx::from_parts(3, &[1], &[0], &[Relation::HumanRobot]);
    let two = GraphCtx::from_parts(3, &[1, 2], &[0, 0], &[Relation::HumanRobot; 2]);
    let a = rgcn_layer(&one, h, &w, false, true).unwrap();
    let b = rgcn_layer(&two, h, &w, false, true).unwrap();
    assert!((a.value().get(0, 0) - b.value().get(0, 0)).abs() < 1e-15);
    assert!((a.value().get(0, 1) - b.value().get(0, 1)).abs() < 1e-15);
}

#[test]
fn rgcn_single_relation_unnormalized_matches_gcn() {
    let mut rng = Rng::new(7);
    let n = 5;
    let src = [0, 1, 2, 3, 4, 1, 3];
    let dst = [0, 1, 2, 3, 4, 0, 0];
    let tape = Tape::new();
    let h = tape.constant(random(&mut rng, &[n, 3]));
    let w_rel = random(&mut rng, &[3, 4]);
    let w_self = random(&mut rng, &[3, 4]);
    let bias = tape.constant(random(&mut rng, &[4]));
    let mut rel_weights = relation_weights(&tape, &mut rng, 3, 4, true);
    rel_weights[Relation::ObjectRobot.id()] = tape.constant(w_rel.clone());
    let r = rgcn_layer(
        &GraphCtx::from_parts(n, &src, &dst, &[Relation::ObjectRobot; 7]),
        h,
        &RgcnWeights {
            self_weight: tape.constant(w_self.clone()),
            bias,
            relation_weights: rel_weights,
        },
        false,
        false,
    )
    .unwrap();
    let stacked = Tensor::new(vec![6, 4], [w_rel.data(), w_self.data()].concat()).unwrap();
    let g = gcn_layer(
        &GraphCtx::from_parts(n, &src, &dst, &[]),
        h,
        &GcnWeights {
            weight: tape.constant(stacked),
            bias,
        },
        false,
    )
    .unwrap();
    assert!(r.value().max_abs_diff(&g.value()) < 1e-12);
}

#[test]
fn rgcn_requires_relations() {
    let tape = Tape::new();
    let mut rng = Rng::new(1);
    let ctx = GraphCtx::from_parts(1, &[0], &[0], &[]);
    let w = RgcnWeights {
        self_weight: tape.constant(Tensor::zeros(&[1, 1])),
        bias: tape.constant(Tensor::zeros(&[1])),
        relation_weights: relation_weights(&tape, &mut rng, 1, 1, true),
    };
    assert!(rgcn_layer(&ctx, tape.constant(Tensor::zeros(&[1, 1])), &w, false, true).is_err());
}

fn ggnn_weights<'t>(tape: &'t Tape, h: usize, update_bias: f64) -> GgnnWeights<'t> {
    let z = |shape: &[usize]| tape.constant(Tensor::zeros(shape));
    GgnnWeights {
        messages: (0..Relation::COUNT).map(|_| z(&[h, h])).collect(),
        w_update: z(&[h, h]),
        u_update: z(&[h, h]),
        b_update: tape.constant(Tensor::filled(&[h], update_bias)),
        w_reset: z(&[h, h]),
        u_reset: z(&[h, h]),
        b_reset: z(&[h]),
        w_cand: z(&[h, h]),
        u_cand: z(&[h, h]),
        b_cand: z(&[h]),
    }
}

#[test]
fn ggnn_zero_weights_halve_the_state() {
    let mut rng = Rng::new(8);
    let rels = [Relation::SelfLoop, Relation::SelfLoop, Relation::HumanRobot];
    let ctx = GraphCtx::from_parts(2, &[0, 1, 1], &[0, 1, 0], &rels);
    let tape = Tape::new();
    let v = random(&mut rng, &[2, 3]);
    let out = ggnn_step(&ctx, tape.constant(v.clone()), &ggnn_weights(&tape, 3, 0.0)).unwrap();
    assert!(out.value().max_abs_diff(&v.map(|x| 0.5 * x)) < 1e-15);
}

#[test]
fn ggnn_closed_update_gate_carries_state() {
    let mut rng = Rng::new(9);
    let ctx = GraphCtx::from_parts(1, &[0], &[0], &[Relation::SelfLoop]);
    let tape = Tape::new();
    let v = random(&mut rng, &[1, 3]);
    let out = ggnn_step(
        &ctx,
        tape.constant(v.clone()),
        &ggnn_weights(&tape, 3, -50.0),
    )
    .unwrap();
    assert!(out.value().max_abs_diff(&v) < 1e-20_f64.max(1e-15));
}

#[test]
fn readout_zero_weights_is_half() {
    let tape = Tape::new();
    let h = tape.constant(t(&[&[3.0, -1.0], &[7.0, 2.0]]));
    let robots: crate::numeric::Index = vec![0, 1].into();
    let out = readout_robot(
        h,
        &robots,
        tape.constant(Tensor::zeros(&[2, 1])),
        tape.constant(Tensor::zeros(&[1])),
    )
    .unwrap();
    assert_eq!(out.value().data(), &[0.5, 0.5]);
}

#[test]
fn selected_preset_shape() {
    let spec = ModelSpec::selected_gat();
    assert_eq!(spec.blocks.len(), 4);
    assert!(spec
        .blocks
        .iter()
        .all(|b| b.kind == BlockKind::Gat && b.hidden == 129 && b.heads == 2));
    assert_eq!(spec.final_heads, 3);
    assert_eq!(spec.alpha, 0.2114);
    assert_eq!(spec.variant, crate::graph::Variant::Unlabelled);
}

#[test]
fn hybrid_presets() {
    let p = PresetParams {
        layers: 4,
        hidden: 64,
        heads: 2,
        final_heads: 2,
        alpha: 0.2,
        dropout: 0.0,
        variant: None,
    };
    let seq = Preset::RgcnGatSeq.build(&p).unwrap();
    let kinds: Vec<_> = seq.blocks.iter().map(|b| b.kind).collect();
    use BlockKind::*;
    assert_eq!(kinds, vec![Rgcn, Rgcn, Gat, Gat]);
    assert!(seq.blocks.iter().all(|b| b.hidden == 64));
    let inter = Preset::RgcnGatInterleaved.build(&p).unwrap();
    let kinds: Vec<_> = inter.blocks.iter().map(|b| b.kind).collect();
    assert_eq!(kinds, vec![Rgcn, Gat, Rgcn, Gat]);
    let dec = Preset::RgcnGatDecreasing
        .build(&PresetParams { hidden: 128, ..p })
        .unwrap();
    let widths: Vec<_> = dec.blocks.iter().map(|b| b.hidden).collect();
    assert_eq!(widths, vec![128, 96, 64, 32]);
    for preset in Preset::ALL {
        assert_eq!(preset.name().parse::<Preset>().unwrap(), preset);
    }
    assert!("gat2".parse::<Preset>().is_err());
}

#[test]
fn spec_errors() {
    use crate::graph::Variant;
    let err = Preset::Rgcn
        .build(&PresetParams {
            layers: 2,
            hidden: 8,
            heads: 1,
            final_heads: 1,
            alpha: 0.2,
            dropout: 0.0,
            variant: Some(Variant::Unlabelled),
        })
        .unwrap_err();
    assert!(matches!(err, ModelError::Spec(_)));
    let mut spec = params(BlockKind::Ggnn, 2, 8, None);
    spec.blocks[1].hidden = 9;
    assert!(matches!(spec.validate(), Err(ModelError::Spec(m)) if m.contains("width")));
}

#[test]
fn every_preset_scores_in_unit_interval() {
    for preset in Preset::ALL {
        let spec = preset
            .build(&PresetParams {
                layers: 3,
                hidden: 6,
                heads: 2,
                final_heads: 2,
                alpha: 0.2,
                dropout: 0.0,
                variant: None,
            })
            .unwrap();
        let model = assemble_model(&spec, &mut Rng::new(1)).unwrap();
        let graphs = synthetic_graphs(4, spec.variant);
        let refs: Vec<_> = graphs.iter().collect();
        for s in model.score_graphs(&refs).unwrap() {
            assert!(s > 0.0 && s < 1.0, "{preset}: {s}");
        }
    }
}

#[test]
fn variant_mismatch_is_rejected() {
    let model = assemble_model(&params(BlockKind::Gat, 2, 4, None), &mut Rng::new(1)).unwrap();
    let g = &synthetic_graphs(1, crate::graph::Variant::Labelled)[0];
    assert!(model.score(g).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let spec = params(BlockKind::Ggnn, 2, 5, None);
    let model = assemble_model(&spec, &mut Rng::new(11)).unwrap();
    let json = model.to_checkpoint_json();
    let back = Model::from_checkpoint_json(&json).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.to_checkpoint_json(), json);
}

#[test]
fn checkpoint_layout_mismatch_refused() {
    let model = assemble_model(&params(BlockKind::Gat, 2, 4, None), &mut Rng::new(1)).unwrap();
    let mut ck = Checkpoint::from_model(&model);
    ck.feature_layout = "v0-unlabelled-24".into();
    assert!(
        matches!(ck.clone().into_model(), Err(ModelError::Checkpoint(m)) if m.contains("layout"))
    );
    let mut ck = Checkpoint::from_model(&model);
    ck.params[0].shape = vec![1, ck.params[0].data.len()];
    assert!(ck.into_model().is_err());
    assert!(Model::from_checkpoint_json("{}").is_err());
}

#[test]
fn dropout_only_changes_training_forward() {
    let mut spec = params(BlockKind::Gat, 3, 8, None);
    spec.dropout = 0.5;
    let model = assemble_model(&spec, &mut Rng::new(2)).unwrap();
    let graphs = synthetic_graphs(3, spec.variant);
    let refs: Vec<_> = graphs.iter().collect();
    let batch = batch_graphs(&refs).unwrap();
    let eval = model.score_batched(&batch).unwrap();
    assert_eq!(eval, model.score_batched(&batch).unwrap());
    let tape = Tape::new();
    let mut rng = Rng::new(5);
    let (train, _) = model
        .forward(
            &tape,
            &batch,
            Some(Dropout {
                rate: 0.5,
                rng: &mut rng,
            }),
        )
        .unwrap();
    assert_ne!(train.value().data(), eval.as_slice());
}

fn model_grad_check(spec: &ModelSpec, seed: u64) -> f64 {
    let model = assemble_model(spec, &mut Rng::new(seed)).unwrap();
    let mut rng = Rng::new(seed + 100);
    let graphs = [
        random_graph(&mut rng, spec.variant, 6),
        random_graph(&mut rng, spec.variant, 6),
    ];
    let batch = batch_graphs(&[&graphs[0], &graphs[1]]).unwrap();
    let labels = Tensor::new(vec![2, 1], vec![0.3, 0.8]).unwrap();
    grad_check_many(
        |tape, vars| {
            let pred = model
                .forward_with(tape, vars, &batch, None)
                .map_err(|e| crate::numeric::TensorError::Evaluation(e.to_string()))?;
            let diff = pred.sub(tape.constant(labels.clone()))?;
            Ok(diff.mul(diff)?.mean())
        },
        model.params(),
        1e-5,
    )
    .unwrap()
}

#[test]
fn small_models_pass_gradient_checks() {
    for kind in [
        BlockKind::Gcn,
        BlockKind::Gat,
        BlockKind::Rgcn,
        BlockKind::Ggnn,
    ] {
        let err = model_grad_check(&params(kind, 2, 3, None), 1);
        assert!(err < 1e-4, "{kind:?}: {err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scores_are_permutation_invariant(seed in 0u64..10_000, perm_seed in 0u64..1000, labelled in any::<bool>()) {
        let kind = if labelled { BlockKind::Rgcn } else { BlockKind::Gat };
        let spec = params(kind, 2, 6, None);
        let model = assemble_model(&spec, &mut Rng::new(seed)).unwrap();
        let g = build_graph(&generate_synthetic(seed, &SynthConfig::default()).unwrap(), spec.variant).unwrap();
        let mut perm: Vec<usize> = (0..g.num_nodes()).collect();
        Rng::new(perm_seed).shuffle(&mut perm);
        let a = model.score(&g).unwrap();
        let b = model.score(&g.permuted(&perm)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}
