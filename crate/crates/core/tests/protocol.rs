mod common;

use std::sync::Arc;
use std::time::Duration;

use common::{double, max_abs_diff, random_image, rng};
use latent_shap::codec::{external_codec, identity_codec, Codec, FeatureGrouping, FourierCodec};
use latent_shap::models::{external_model, HoleDetector, Model};
use latent_shap::pipeline::{explain_local, ExplainConfig, Explainer, MethodChoice};
use latent_shap::protocol::ProcessSpec;
use latent_shap::value_fn::BackgroundSet;
use latent_shap::{Error, Image, Shape};

fn spec(args: &str) -> ProcessSpec {
    ProcessSpec::new(double(args).strip_prefix("exec:").unwrap()).with_timeout(Duration::from_secs(30))
}

fn images(shape: Shape, n: usize, seed: u64) -> Vec<Image> {
    let mut r = rng(seed);
    (0..n).map(|_| random_image(shape, &mut r)).collect()
}

fn explain(
    model: Arc<dyn Model>,
    codec: Arc<dyn Codec>,
    x: &Image,
    bg: &[Image],
    method: MethodChoice,
) -> latent_shap::Result<latent_shap::Attribution> {
    let ex = Explainer::new(
        model,
        codec,
        ExplainConfig {
            method,
            num_samples: 200,
            seed: 5,
            ..ExplainConfig::default()
        },
    );
    explain_local(&ex, x, &BackgroundSet::new(bg.to_vec())?, None)
}

#[test]
fn block_codec_handshake_declares_its_grouping() {
    let shape = Shape::new(4, 5, 1);
    let codec = external_codec(&spec("serve-codec --kind identity --shape 4,5,1 --block 2x1")).unwrap();
    let g = codec.grouping();
    assert_eq!((g.num_features(), g.num_scalars()), (10, 20));
    assert_eq!(codec.input_shape(), shape);

    let builtin = identity_codec(shape, FeatureGrouping::pixel_blocks(shape, 2, 1).unwrap()).unwrap();
    assert_eq!(g.scalar_assignment(), builtin.grouping().scalar_assignment());
    assert_eq!(g.feature_names(), builtin.grouping().feature_names());
    let x = &images(shape, 1, 1)[0];
    assert_eq!(codec.decode(&codec.encode(x).unwrap()).unwrap(), *x);

    let bg = images(shape, 3, 2);
    let model: Arc<dyn Model> = Arc::new(latent_shap::models::LinearModel::mean_intensity(shape));
    let a = explain(model.clone(), Arc::new(codec), x, &bg, MethodChoice::Exact).unwrap();
    let b = explain(model, Arc::new(builtin), x, &bg, MethodChoice::Exact).unwrap();
    assert_eq!(a.feature_names, b.feature_names);
    assert!(max_abs_diff(&a.values, &b.values) <= 1e-12);
}

#[test]
fn external_fourier_codec_matches_builtin() {
    let shape = Shape::new(8, 8, 1);
    let ext: Arc<dyn Codec> =
        Arc::new(external_codec(&spec("serve-codec --kind fourier --shape 8,8,1 --bins 3")).unwrap());
    let own: Arc<dyn Codec> = Arc::new(FourierCodec::new(shape, Some(3)).unwrap());
    let model: Arc<dyn Model> = Arc::new(latent_shap::models::LinearModel::mean_intensity(shape));
    let x = &images(shape, 1, 3)[0];
    let bg = images(shape, 4, 4);
    for method in [MethodChoice::Exact, MethodChoice::MonteCarlo] {
        let a = explain(model.clone(), ext.clone(), x, &bg, method).unwrap();
        let b = explain(model.clone(), own.clone(), x, &bg, method).unwrap();
        assert!(max_abs_diff(&a.values, &b.values) <= 1e-12);
    }
}

#[test]
fn worker_pools_give_identical_results() {
    let shape = Shape::new(8, 8, 1);
    let x = &images(shape, 1, 6)[0];
    let bg = images(shape, 4, 7);
    let codec: Arc<dyn Codec> = Arc::new(FourierCodec::new(shape, Some(4)).unwrap());
    let run = |workers| {
        let m = external_model(&spec("serve-model --kind hole --shape 8,8,1").with_pool_size(workers)).unwrap();
        explain(Arc::new(m), codec.clone(), x, &bg, MethodChoice::MonteCarlo).unwrap()
    };
    let own = explain(
        Arc::new(HoleDetector::new(0.5).unwrap()),
        codec.clone(),
        x,
        &bg,
        MethodChoice::MonteCarlo,
    )
    .unwrap();
    assert_eq!(run(1), own);
    assert_eq!(run(3), own);
}

#[test]
fn uniform_model_explains_to_zero() {
    let shape = Shape::new(8, 8, 1);
    let m = external_model(&spec("serve-model --kind uniform --shape 8,8,1 --classes 4")).unwrap();
    assert_eq!(m.num_classes(), 4);
    let a = explain(
        Arc::new(m),
        Arc::new(FourierCodec::new(shape, Some(5)).unwrap()),
        &images(shape, 1, 8)[0],
        &images(shape, 2, 9),
        MethodChoice::Exact,
    )
    .unwrap();
    assert!(a.values.iter().all(|&v| v == 0.0));
    assert_eq!(a.v_full, 0.25);
}

fn predict_error(kind: &str) -> Error {
    let m = external_model(&spec(&format!("serve-model --kind {kind} --shape 8,8,1"))).unwrap();
    m.predict(&images(Shape::new(8, 8, 1), 2, 10)).unwrap_err()
}

#[test]
fn malformed_reply_names_the_request() {
    match predict_error("malformed") {
        Error::Protocol { id: Some(_), message } => assert!(!message.is_empty()),
        other => panic!("expected a protocol error, got {other:?}"),
    }
    assert_eq!(predict_error("malformed").exit_code(), 3);
}

#[test]
fn invalid_probabilities_are_rejected() {
    assert!(matches!(predict_error("bad-probs"), Error::BadProbabilities(_)));
}

#[test]
fn exiting_child_is_reported() {
    assert!(matches!(predict_error("exit"), Error::ProcessExited(_)));
}

#[test]
fn malformed_codec_reply_is_a_protocol_error() {
    let c = external_codec(&spec("serve-codec --kind malformed --shape 8,8,1 --bins 2")).unwrap();
    let err = c.encode(&images(Shape::new(8, 8, 1), 1, 11)[0]).unwrap_err();
    assert!(matches!(err, Error::Protocol { id: Some(_), .. }), "{err:?}");
}

#[test]
fn silent_child_times_out() {
    let err = external_model(&ProcessSpec::new("sleep 5").with_timeout(Duration::from_millis(200))).unwrap_err();
    assert!(matches!(err, Error::Timeout(_)), "{err:?}");
}

#[test]
fn missing_command_fails_cleanly() {
    let err = external_model(&ProcessSpec::new("definitely-not-a-command-7f3a").with_timeout(Duration::from_secs(5)))
        .unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err:?}");
}

#[test]
fn shape_mismatch_with_declared_input_is_caught() {
    let m: Arc<dyn Model> = Arc::new(external_model(&spec("serve-model --kind hole --shape 8,8,1")).unwrap());
    let shape = Shape::new(6, 6, 1);
    let err = explain(
        m,
        Arc::new(FourierCodec::new(shape, Some(2)).unwrap()),
        &images(shape, 1, 12)[0],
        &images(shape, 1, 13),
        MethodChoice::Exact,
    )
    .unwrap_err();
    assert!(matches!(err, Error::ShapeMismatch { .. }), "{err:?}");
}
