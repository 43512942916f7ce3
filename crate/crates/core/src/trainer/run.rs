use std::time::Instant;

use crate::graphdata::GraphDataset;
use crate::losses::{
    cross_entropy_loss, generative_loss, overall_loss, ssc_loss, ContrastOptions,
    ContrastStrategy, EdgeSampleBatch,
};
use crate::numcore::{Adam, DenseMatrix, NodeId, Tape};
use crate::trainer::model::accuracy;
use crate::trainer::{Cg3Model, EpochMetrics, TrainConfig, TrainError, TrainReport};

/// Exact denominators up to this many nodes; column sampling beyond.
const EXACT_CONTRAST_LIMIT: usize = 25_000;
/// Sampled denominator width when the exact one is out of reach.
const SAMPLED_CONTRAST_COLUMNS: usize = 512;

pub struct TrainOutcome {
    pub tape: Tape,
    pub model: Cg3Model,
    pub report: TrainReport,
}

/// Builds a fresh model and trains it. Callers that need to adjust initial
/// weights first can run `Cg3Model::build` and `train_model` themselves.
pub fn train(ds: &GraphDataset, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let mut tape = Tape::new();
    let mut model = Cg3Model::build(&mut tape, ds, config)?;
    let report = train_model(&mut tape, &mut model, ds, config)?;
    Ok(TrainOutcome { tape, model, report })
}

pub fn train_model(
    tape: &mut Tape,
    model: &mut Cg3Model,
    ds: &GraphDataset,
    config: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    let start = Instant::now();
    config.validate()?;
    for (split, idx) in [
        ("train", ds.train_idx()),
        ("validation", ds.val_idx()),
        ("test", ds.test_idx()),
    ] {
        if idx.is_empty() {
            return Err(TrainError::EmptySplit { split });
        }
    }

    let eff = model.effective_weights();
    let targets = ds.one_hot_labels();
    let exact = config.exact_contrast.unwrap_or(ds.nodes() <= EXACT_CONTRAST_LIMIT);
    let mut adam = Adam::new(config.lr);

    // Everything after this point is per-epoch scratch; params and the
    // permanent sparse operators sit below the mark and survive.
    let mark = tape.watermark();

    let mut epochs: Vec<EpochMetrics> = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params: Vec<DenseMatrix> = Vec::new();
    let mut stale = 0usize;

    for epoch in 0..config.max_iters {
        tape.truncate(mark);
        let views = at_epoch(epoch, "encoder forward", model.encode(tape, true))?;

        let ssc = if eff.lambda_ssc > 0.0 {
            let pair = model.paired(&views)?;
            let opts = ContrastOptions {
                normalize_rows: config.normalize_rows,
                strategy: if exact {
                    ContrastStrategy::Exact
                } else {
                    ContrastStrategy::Sampled {
                        k: SAMPLED_CONTRAST_COLUMNS,
                        seed: config.seed,
                        round: epoch as u64,
                    }
                },
            };
            let terms = ssc_loss(tape, &pair, ds.labels(), ds.train_idx(), &opts);
            Some(at_epoch(epoch, "contrastive", terms.map_err(TrainError::from))?)
        } else {
            None
        };

        let g2 = if eff.lambda_g2 > 0.0 {
            let pair = model.paired(&views)?;
            let w = model.head_w.ok_or_else(|| {
                TrainError::InvalidConfig("generative term without an edge head".into())
            })?;
            let loss = EdgeSampleBatch::sample(ds, config.neg_ratio, config.seed, epoch as u64)
                .and_then(|batch| generative_loss(tape, &pair, w, &batch));
            Some(at_epoch(epoch, "generative", loss.map_err(TrainError::from))?)
        } else {
            None
        };

        let out = model.fused(tape, &views)?;
        let ce = at_epoch(
            epoch,
            "classification",
            cross_entropy_loss(tape, out, &targets, ds.train_idx()).map_err(TrainError::from),
        )?;
        let total = at_epoch(
            epoch,
            "total",
            overall_loss(tape, ce, ssc.as_ref().map(|t| t.combined), g2, &eff)
                .map_err(TrainError::from),
        )?;

        let mut metrics = EpochMetrics {
            epoch,
            ce: tape.scalar(ce),
            uc: ssc.as_ref().map_or(0.0, |t| tape.scalar(t.unsupervised)),
            sc: ssc.as_ref().map_or(0.0, |t| tape.scalar(t.supervised)),
            g2: g2.map_or(0.0, |id| tape.scalar(id)),
            total: tape.scalar(total),
            val_acc: 0.0,
        };
        abort_on_non_finite(epoch, &metrics)?;

        let update = tape.backward(total).and_then(|()| adam.step(tape, model.decay_pairs()));
        at_epoch(epoch, "update", update.map_err(TrainError::from))?;

        // Validation runs on the freshly updated weights with dropout off.
        let val = model
            .predict(tape)
            .and_then(|preds| accuracy(&preds.classes, ds, ds.val_idx(), "validation"));
        metrics.val_acc = at_epoch(epoch, "validation", val)?;
        epochs.push(metrics.clone());

        if metrics.val_acc > best_val {
            best_val = metrics.val_acc;
            best_epoch = epoch;
            best_params = snapshot_params(tape);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    restore_params(tape, &best_params)?;
    tape.truncate(mark);
    let preds = model.predict(tape)?;
    let test_acc = accuracy(&preds.classes, ds, ds.test_idx(), "test")?;

    Ok(TrainReport {
        config: config.clone(),
        epochs,
        best_epoch,
        best_val_acc: best_val,
        test_acc,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

fn at_epoch<T>(
    epoch: usize,
    component: &'static str,
    r: Result<T, TrainError>,
) -> Result<T, TrainError> {
    r.map_err(|e| TrainError::AtEpoch { epoch, component, source: Box::new(e) })
}

fn abort_on_non_finite(epoch: usize, m: &EpochMetrics) -> Result<(), TrainError> {
    for (component, value) in [
        ("cross-entropy", m.ce),
        ("unsupervised contrastive", m.uc),
        ("supervised contrastive", m.sc),
        ("generative", m.g2),
        ("total", m.total),
    ] {
        if !value.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, component });
        }
    }
    Ok(())
}

fn snapshot_params(tape: &Tape) -> Vec<DenseMatrix> {
    tape.params().iter().map(|&p| tape.value(p).clone()).collect()
}

fn restore_params(tape: &mut Tape, saved: &[DenseMatrix]) -> Result<(), TrainError> {
    let ids: Vec<NodeId> = tape.params().to_vec();
    for (&id, value) in ids.iter().zip(saved) {
        tape.set_value(id, value.clone())?;
    }
    Ok(())
}

/// Trains one run per seed, fanning out over scoped worker threads capped by
/// `CG3_THREADS` (hardware parallelism otherwise). Reports come back in seed
/// order; the full outcome of the first seed is kept for artifact export,
/// and the first failing seed's error wins.
pub fn train_seeds(
    ds: &GraphDataset,
    base: &TrainConfig,
    seeds: &[u64],
) -> Result<(TrainOutcome, Vec<TrainReport>), TrainError> {
    if seeds.is_empty() {
        return Err(TrainError::InvalidConfig("seed list is empty".into()));
    }
    base.validate()?;

    let workers = worker_cap(seeds.len());
    let mut slots: Vec<Option<Result<TrainReport, TrainError>>> = Vec::new();
    slots.resize_with(seeds.len(), || None);
    let mut first: Option<TrainOutcome> = None;

    for (wave, chunk) in seeds.chunks(workers).enumerate() {
        let results: Vec<Result<TrainOutcome, TrainError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| {
                    scope.spawn(move || {
                        let mut cfg = base.clone();
                        cfg.seed = seed;
                        train(ds, &cfg)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
        });
        for (offset, result) in results.into_iter().enumerate() {
            let index = wave * workers + offset;
            match result {
                Ok(outcome) => {
                    slots[index] = Some(Ok(outcome.report.clone()));
                    if index == 0 {
                        first = Some(outcome);
                    }
                    // Later outcomes drop here, releasing their tapes.
                }
                Err(e) => slots[index] = Some(Err(e)),
            }
        }
    }

    let mut reports = Vec::with_capacity(seeds.len());
    for slot in slots {
        reports.push(slot.expect("every seed ran")?);
    }
    let first = first.expect("seed zero succeeded");
    Ok((first, reports))
}

fn worker_cap(jobs: usize) -> usize {
    let configured = std::env::var("CG3_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w >= 1);
    let hardware = std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1);
    configured.unwrap_or(hardware).min(jobs).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphdata::{generate_sbm, SbmSpec};
    use crate::losses::LossWeights;
    use crate::trainer::TrainMode;

    fn fixture(seed: u64) -> GraphDataset {
        generate_sbm(&SbmSpec {
            blocks: 2,
            block_size: 12,
            p_intra: 0.5,
            p_inter: 0.05,
            feature_dim: 4,
            noise: 0.3,
            labels_per_class: 3,
            seed,
        })
        .unwrap()
    }

    fn quick_config(mode: TrainMode) -> TrainConfig {
        TrainConfig {
            max_iters: 25,
            hidden: 8,
            levels: 1,
            dropout: 0.2,
            mode,
            ..Default::default()
        }
    }

    #[test]
    fn full_run_reports_every_component() {
        let ds = fixture(3);
        let out = train(&ds, &quick_config(TrainMode::Full)).unwrap();
        let r = &out.report;
        assert!(!r.epochs.is_empty());
        assert!(r.best_epoch < r.epochs.len());
        assert!(r.best_val_acc >= 0.0 && r.best_val_acc <= 1.0);
        assert!(r.test_acc >= 0.0 && r.test_acc <= 1.0);
        assert!(r.wall_secs > 0.0);
        let first = &r.epochs[0];
        assert!(first.ce > 0.0 && first.uc > 0.0 && first.sc >= 0.0 && first.g2 > 0.0);
        let by_hand = first.ce + first.uc + first.sc + first.g2;
        assert!((first.total - by_hand).abs() < 1e-9, "unit weights add plainly");
    }

    #[test]
    fn ablation_runs_log_zero_for_skipped_terms() {
        let ds = fixture(3);
        let out = train(&ds, &quick_config(TrainMode::GcnBaseline)).unwrap();
        for e in &out.report.epochs {
            assert_eq!(e.uc, 0.0);
            assert_eq!(e.sc, 0.0);
            assert_eq!(e.g2, 0.0);
            assert_eq!(e.total, e.ce);
        }
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let ds = fixture(7);
        let cfg = quick_config(TrainMode::Full);
        let a = train(&ds, &cfg).unwrap().report;
        let b = train(&ds, &cfg).unwrap().report;
        assert_eq!(a.epochs, b.epochs);
        assert_eq!(a.best_epoch, b.best_epoch);
        assert_eq!(a.test_acc, b.test_acc);
    }

    #[test]
    fn different_seeds_diverge() {
        let ds = fixture(7);
        let mut cfg = quick_config(TrainMode::Full);
        let a = train(&ds, &cfg).unwrap().report;
        cfg.seed = 1;
        let b = train(&ds, &cfg).unwrap().report;
        assert_ne!(a.epochs, b.epochs);
    }

    #[test]
    fn baseline_mode_equals_explicit_zero_weights() {
        let ds = fixture(5);
        let by_mode = quick_config(TrainMode::GcnBaseline);
        let mut by_weights = quick_config(TrainMode::Full);
        by_weights.weights = LossWeights { lambda_phi1: 0.5, lambda_ssc: 0.0, lambda_g2: 0.0 };
        let a = train(&ds, &by_mode).unwrap().report;
        let b = train(&ds, &by_weights).unwrap().report;
        assert_eq!(a.epochs, b.epochs);
        assert_eq!(a.test_acc, b.test_acc);
    }

    #[test]
    fn zero_level_refinement_with_tied_weights_tracks_plain_gcn() {
        let ds = fixture(11);
        let mut cfg_gcn = quick_config(TrainMode::GcnBaseline);
        cfg_gcn.dropout = 0.0;
        cfg_gcn.weights.lambda_phi1 = 1.0;
        let mut cfg_hier = cfg_gcn.clone();
        cfg_hier.levels = 0;
        cfg_hier.weights.lambda_phi1 = 0.0;

        let mut tape_a = Tape::new();
        let mut model_a = Cg3Model::build(&mut tape_a, &ds, &cfg_gcn).unwrap();
        let mut tape_b = Tape::new();
        let mut model_b = Cg3Model::build(&mut tape_b, &ds, &cfg_hier).unwrap();
        assert!(model_a.hier.is_none() && model_b.gcn.is_none());

        let gcn = model_a.gcn.as_ref().unwrap();
        let hier = model_b.hier.as_ref().unwrap();
        let w0 = tape_a.value(gcn.w0).clone();
        let w1 = tape_a.value(gcn.w1).clone();
        tape_b.set_value(hier.w_bottom, w0).unwrap();
        tape_b.set_value(hier.w_proj, w1).unwrap();

        let a = train_model(&mut tape_a, &mut model_a, &ds, &cfg_gcn).unwrap();
        let b = train_model(&mut tape_b, &mut model_b, &ds, &cfg_hier).unwrap();
        assert_eq!(a.epochs, b.epochs, "identical pipelines must agree to the bit");
        assert_eq!(a.test_acc, b.test_acc);
    }

    #[test]
    fn patience_cuts_the_run_short() {
        let ds = fixture(9);
        let mut cfg = quick_config(TrainMode::GcnBaseline);
        cfg.max_iters = 200;
        cfg.patience = 3;
        let r = train(&ds, &cfg).unwrap().report;
        assert!(r.epochs.len() < 200, "ran {} epochs", r.epochs.len());
        assert!(r.epochs.len() <= r.best_epoch + cfg.patience + 1);
    }

    #[test]
    fn exploding_step_aborts_with_component_and_epoch() {
        let ds = fixture(3);
        let mut cfg = quick_config(TrainMode::GcnBaseline);
        cfg.lr = 1e160;
        cfg.max_iters = 5;
        match train(&ds, &cfg) {
            Err(TrainError::NonFiniteLoss { .. }) => {}
            Err(TrainError::AtEpoch { component, .. }) => {
                assert!(
                    ["encoder forward", "classification", "validation"].contains(&component),
                    "explosion surfaced in '{}'",
                    component
                );
            }
            other => panic!("expected a non-finite abort, got {:?}", other.map(|o| o.report)),
        }
    }

    #[test]
    fn empty_validation_split_is_rejected_up_front() {
        let ds = fixture(3);
        let stripped = GraphDataset::new(
            ds.features().clone(),
            ds.adjacency().clone(),
            ds.labels().to_vec(),
            ds.classes(),
            ds.train_idx().to_vec(),
            vec![],
            ds.test_idx().to_vec(),
        )
        .unwrap();
        let err = train(&stripped, &quick_config(TrainMode::Full)).map(|_| ()).unwrap_err();
        assert!(matches!(err, TrainError::EmptySplit { split: "validation" }));
    }

    #[test]
    fn seed_fanout_orders_reports_and_keeps_first_artifacts() {
        let ds = fixture(13);
        let mut cfg = quick_config(TrainMode::GcnBaseline);
        cfg.max_iters = 8;
        let seeds = [4u64, 9, 2];
        let (outcome, reports) = train_seeds(&ds, &cfg, &seeds).unwrap();
        assert_eq!(reports.len(), 3);
        for (r, &s) in reports.iter().zip(&seeds) {
            assert_eq!(r.config.seed, s);
        }
        assert_eq!(outcome.report.config.seed, 4);
        assert_eq!(outcome.report.epochs, reports[0].epochs);

        // The fan-out must match running each seed alone.
        let mut solo = cfg.clone();
        solo.seed = 9;
        let lone = train(&ds, &solo).unwrap().report;
        assert_eq!(lone.epochs, reports[1].epochs);
    }

    #[test]
    fn fanout_requires_a_seed() {
        let ds = fixture(3);
        let cfg = quick_config(TrainMode::Full);
        assert!(matches!(train_seeds(&ds, &cfg, &[]), Err(TrainError::InvalidConfig(_))));
    }
}
