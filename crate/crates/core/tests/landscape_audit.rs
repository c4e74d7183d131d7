mod common;

use tracevis_core::landscape::{
    render_landscape, sample_records, sample_trajectory, BundleMeta, Extent, Palette, Shading, BUNDLE_VERSION, WHITE,
};
use tracevis_core::boundary::is_delta_boundary;
use tracevis_core::numerics::argmax;
use tracevis_core::subject::{Dataset, Split, SubjectCheckpoint};
use tracevis_core::visualizer::{fit_sequence, EpochFit};

fn trained(seed: u64, epochs: usize) -> (Dataset, Vec<SubjectCheckpoint>, Vec<EpochFit>) {
    trained_for(seed, epochs, 8)
}

fn trained_for(seed: u64, epochs: usize, fit_epochs: usize) -> (Dataset, Vec<SubjectCheckpoint>, Vec<EpochFit>) {
    let (train, _) = common::fixture::blobs(seed);
    let ckpts = common::fixture::subject(&train, epochs, seed);
    let fits = fit_sequence(&ckpts, &train, &common::fixture::sequence_config(fit_epochs, seed)).unwrap();
    (train, ckpts, fits)
}

fn extent_of(fit: &EpochFit) -> Extent {
    Extent::around(&fit.model.project(&fit.reps).unwrap(), 0.05).unwrap()
}

#[test]
fn audit_pixels_reproduce_stored_values() {
    let (_, ckpts, fits) = trained(20, 2);
    for (ckpt, fit) in ckpts.iter().zip(&fits) {
        let raster = render_landscape(&fit.model, ckpt, extent_of(fit), 120, 100, 0.1, Shading::Softmax).unwrap();
        assert_eq!(raster.classes.len(), 120 * 100);
        assert_eq!(common::landscape_audit(&fit.model, ckpt, &raster, 0.1, 1000, ckpt.epoch as u64), 0);
        assert!(raster.boundary_count() > 0, "a trained 3-class landscape has some boundary band");

        let palette = Palette::distinct(3);
        let rgb = palette.paint(&raster, 3);
        for (p, &flag) in raster.boundary.iter().enumerate() {
            assert_eq!(rgb[3 * p..3 * p + 3] == WHITE, flag, "pixel {p}");
        }
        assert!(raster.confidence.iter().all(|c| (0.0..=1.0).contains(c)));
    }
}

#[test]
fn every_sample_lands_on_its_own_class() {
    let (train, ckpts, fits) = trained_for(21, 2, 30);
    let (ckpt, fit) = (&ckpts[1], &fits[1]);
    let extent = extent_of(fit);
    let raster = render_landscape(&fit.model, ckpt, extent, 300, 300, 0.1, Shading::Softmax).unwrap();
    let emb = fit.model.project(&fit.reps).unwrap();
    let round_trip = ckpt.logits(&fit.model.inverse_project(&emb).unwrap()).unwrap();
    let mut checked = 0;
    for i in 0..train.len() {
        let (row, col) = extent.locate(emb[(i, 0)], emb[(i, 1)], 300, 300).expect("extent covers the embedding");
        let p = raster.index(row, col);
        // a sample whose own round trip sits on the band can fall either side of a pixel center
        if raster.boundary[p] || is_delta_boundary(round_trip.row(i), 0.1).unwrap_or(true) {
            continue;
        }
        checked += 1;
        assert_eq!(raster.classes[p] as usize, argmax(round_trip.row(i)), "sample {i}");
    }
    assert!(checked > train.len() / 2, "checked {checked}, band {}", raster.boundary_count());
}

#[test]
fn zero_delta_leaves_no_band() {
    let (_, ckpts, fits) = trained(22, 2);
    let raster = render_landscape(&fits[0].model, &ckpts[0], extent_of(&fits[0]), 80, 80, 0.0, Shading::Softmax).unwrap();
    assert_eq!(raster.boundary_count(), 0);
}

#[test]
fn constant_decoder_paints_one_class() {
    let (train, ckpts, fits) = trained(23, 2);
    let ckpt = &ckpts[1];
    let mut model = fits[1].model.clone();
    // the most confident training representation
    let logits = ckpt.logits(&fits[1].reps).unwrap();
    let margin = |r: &[f32]| tracevis_core::boundary::rescaled_margin(r).unwrap();
    let best = (0..train.len()).max_by(|&a, &b| margin(logits.row(a)).total_cmp(&margin(logits.row(b)))).unwrap();
    let n = model.decoder.layers().len();
    for (l, layer) in model.decoder.layers_mut().iter_mut().enumerate() {
        layer.weights.as_mut_slice().fill(0.0);
        layer.biases.fill(0.0);
        if l + 1 == n {
            layer.biases.copy_from_slice(fits[1].reps.row(best));
        }
    }
    let raster = render_landscape(&model, ckpt, extent_of(&fits[1]), 60, 60, 0.1, Shading::Softmax).unwrap();
    assert_eq!(raster.boundary_count(), 0);
    let class = argmax(logits.row(best)) as u8;
    assert!(raster.classes.iter().all(|&c| c == class));
    assert!(render_landscape(&model, ckpt, extent_of(&fits[1]), 49, 60, 0.1, Shading::Softmax).is_err());
}

fn meta(fit: &EpochFit, ckpt: &SubjectCheckpoint, train: &Dataset) -> BundleMeta {
    let (emb, embeddings) = sample_records(&fit.model, ckpt, &fit.reps, train.labels(), train.ids(), Split::Train).unwrap();
    BundleMeta {
        version: BUNDLE_VERSION,
        epoch: ckpt.epoch,
        method: "DVI".into(),
        class_count: 3,
        width: 50,
        height: 50,
        extent: Extent::around(&emb, 0.05).unwrap(),
        delta: 0.1,
        shading: Shading::Softmax,
        palette: Palette::distinct(3),
        embeddings,
        metrics: Vec::new(),
        temporal: Vec::new(),
    }
}

#[test]
fn trajectories_follow_epoch_order() {
    let (train, ckpts, fits) = trained(24, 3);
    let metas: Vec<BundleMeta> = fits.iter().zip(&ckpts).map(|(f, c)| meta(f, c, &train)).collect();
    let shuffled = [&metas[2], &metas[0], &metas[1]];
    let path = sample_trajectory(&shuffled, 17).unwrap();
    assert_eq!(path.len(), 3);
    assert!(path.windows(2).all(|w| w[0].epoch < w[1].epoch));
    let emb = fits[1].model.project(&fits[1].reps).unwrap();
    assert_eq!((path[1].x, path[1].y), (emb[(17, 0)], emb[(17, 1)]));

    assert_eq!(sample_trajectory(&[&metas[0]], 17).unwrap().len(), 1);
    assert!(sample_trajectory(&shuffled, 10_000).is_err());
    assert!(sample_trajectory(&[&metas[0], &metas[0]], 17).is_err());
}

#[test]
fn records_carry_subject_predictions() {
    let (train, ckpts, fits) = trained(25, 2);
    let m = meta(&fits[0], &ckpts[0], &train);
    let logits = ckpts[0].logits(&fits[0].reps).unwrap();
    for (i, r) in m.embeddings.iter().enumerate() {
        assert_eq!(r.id, train.ids()[i]);
        assert_eq!(r.predicted, argmax(logits.row(i)));
        assert!(r.confidence > 1.0 / 3.0 - 1e-6 && r.confidence <= 1.0);
    }
}
