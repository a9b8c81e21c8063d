mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use common::{fixture, Loopback, Reply, HEALTH_OK};
use elect::remote::{RemoteConfig, RemoteDenoiser};
use elect::wire::{EncodeRequest, HealthResponse, PredictRequest, PredictResponse, WireTensor};
use elect_core::denoiser::{Denoiser, DenoiserRequest, PredictionMode};
use elect_core::engine::{elect_run, EditTask, EngineConfig};
use elect_core::oracle::PointTargetOracle;
use elect_core::rng::seed_noise;
use elect_core::schedule::{make_schedule, ScheduleKind};
use elect_core::{Error, Tensor};
use serde_json::Value;

fn config(url: &str) -> RemoteConfig {
    RemoteConfig {
        base_url: url.to_string(),
        timeout: Duration::from_secs(10),
        attempts: 3,
        retry_backoff: Duration::from_millis(1),
        null_image_branch: true,
        pool_size: 4,
    }
}

fn tensor(shape: &[usize], vals: &[f32]) -> Tensor {
    Tensor::new(shape.to_vec(), vals.to_vec()).unwrap()
}

fn echo_server() -> Loopback {
    Loopback::start(|_, path, body| match path {
        "/v1/health" => Reply::ok(HEALTH_OK),
        "/v1/predict" => {
            let req: PredictRequest = serde_json::from_str(body).unwrap();
            Reply::ok(serde_json::to_string(&PredictResponse { output: req.latent }).unwrap())
        }
        _ => Reply::status(404, "{}"),
    })
}

fn request<'a>(latent: &'a Tensor, t: usize) -> DenoiserRequest<'a> {
    DenoiserRequest {
        latent,
        t,
        image_latent: None,
        prompt: Some("p"),
        mode: PredictionMode::Eps,
    }
}

#[test]
fn golden_request_fixtures() {
    let latent = tensor(&[1, 1, 2, 2], &[0.5, -1.25, 3.0, 0.0]);
    let image = tensor(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let req = PredictRequest::from_request(&DenoiserRequest {
        latent: &latent,
        t: 40,
        image_latent: Some(&image),
        prompt: Some("make the sky red"),
        mode: PredictionMode::Eps,
    });
    let golden: Value = serde_json::from_str(&fixture("predict_request.json")).unwrap();
    assert_eq!(serde_json::to_value(&req).unwrap(), golden);
    let parsed: PredictRequest = serde_json::from_value(golden).unwrap();
    assert!(parsed.image_latent.unwrap().decode().unwrap().bit_eq(&image));

    let latent = tensor(&[2, 3], &[0.1, 0.2, 0.3, -0.1, -0.2, -0.3]);
    let req = PredictRequest::from_request(&DenoiserRequest {
        latent: &latent,
        t: 7,
        image_latent: None,
        prompt: None,
        mode: PredictionMode::Velocity,
    });
    let golden: Value = serde_json::from_str(&fixture("predict_request_null.json")).unwrap();
    assert_eq!(serde_json::to_value(&req).unwrap(), golden);
}

#[test]
fn golden_response_fixtures() {
    let resp: PredictResponse = serde_json::from_str(&fixture("predict_response.json")).unwrap();
    let out = resp.output.decode().unwrap();
    assert_eq!(out.shape(), &[1, 1, 2, 2]);
    assert_eq!(out.data(), &[0.25, -0.5, 1e-3, 7.0]);
    let health: HealthResponse = serde_json::from_str(&fixture("health.json")).unwrap();
    assert_eq!(health.status, "ok");
    assert_eq!(health.model_id, "echo");
    let enc: EncodeRequest = serde_json::from_str(&fixture("encode_request.json")).unwrap();
    assert_eq!(
        enc,
        EncodeRequest::Path {
            image_path: "/data/cat.png".into()
        }
    );
}

#[test]
fn echo_round_trip_is_bit_exact() {
    let server = echo_server();
    let d = RemoteDenoiser::connect(config(&server.url), PredictionMode::Eps).unwrap();
    assert_eq!(d.model_id(), "loopback");
    for i in 0..50u64 {
        let mut z = seed_noise(1000 + i, &[1, 4, 4, 4]).unwrap();
        if i == 0 {
            // Signed zero, subnormal and extreme values survive the trip.
            z = tensor(&[1, 1, 2, 2], &[-0.0, f32::MIN_POSITIVE / 4.0, f32::MAX, -f32::MAX]);
        }
        let out = d.predict(&request(&z, 50)).unwrap();
        assert!(out.bit_eq(&z), "tensor {i}");
    }
}

#[test]
fn oracle_server_matches_in_process_oracle() {
    let schedule = make_schedule(ScheduleKind::Ddim, 100).unwrap();
    let target = seed_noise(77, &[1, 4, 4, 4]).unwrap();
    let local = PointTargetOracle::new(schedule.clone(), target.clone());
    let remote_oracle = local.clone();
    let server = Loopback::start(move |_, path, body| match path {
        "/v1/health" => Reply::ok(HEALTH_OK),
        _ => {
            let req: PredictRequest = serde_json::from_str(body).unwrap();
            let latent = req.latent.decode().unwrap();
            let out = remote_oracle
                .predict(&DenoiserRequest {
                    latent: &latent,
                    t: req.t,
                    image_latent: None,
                    prompt: None,
                    mode: req.mode,
                })
                .unwrap();
            Reply::ok(
                serde_json::to_string(&PredictResponse {
                    output: WireTensor::encode(&out),
                })
                .unwrap(),
            )
        }
    });
    let d = RemoteDenoiser::connect(config(&server.url), PredictionMode::Eps).unwrap();
    for i in 0..50u64 {
        let z = seed_noise(i, &[1, 4, 4, 4]).unwrap();
        let t = 1 + (i as usize * 37) % 100;
        let a = d.predict(&request(&z, t)).unwrap();
        let b = local.predict(&request(&z, t)).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-6);
    }

    // A whole selection run through the wire matches the in-process run.
    let task = EditTask {
        source_latent: target.clone(),
        instruction: "noop".into(),
        gt_mask: None,
    };
    let cfg = EngineConfig {
        n_candidates: 3,
        steps: 20,
        t_stop: 12,
        relevance_window: 5,
        ..Default::default()
    };
    let remote_run = elect_run(&task, &d, &cfg).unwrap();
    let local_run = elect_run(&task, &local, &cfg).unwrap();
    assert!(remote_run.final_latent.bit_eq(&local_run.final_latent));
    assert_eq!(remote_run.trace, local_run.trace);
}

#[test]
fn server_errors_are_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let server = Loopback::start(move |_, path, body| match path {
        "/v1/health" => Reply::ok(HEALTH_OK),
        _ => {
            if c.fetch_add(1, Ordering::SeqCst) < 2 {
                Reply::status(503, "busy")
            } else {
                let req: PredictRequest = serde_json::from_str(body).unwrap();
                Reply::ok(serde_json::to_string(&PredictResponse { output: req.latent }).unwrap())
            }
        }
    });
    let d = RemoteDenoiser::connect(config(&server.url), PredictionMode::Eps).unwrap();
    let z = seed_noise(1, &[1, 1, 4, 4]).unwrap();
    assert!(d.predict(&request(&z, 10)).unwrap().bit_eq(&z));
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn persistent_server_errors_exhaust_the_attempts() {
    let server = Loopback::start(|_, path, _| match path {
        "/v1/health" => Reply::ok(HEALTH_OK),
        _ => Reply::status(500, "model failure"),
    });
    let d = RemoteDenoiser::connect(config(&server.url), PredictionMode::Eps).unwrap();
    let z = seed_noise(1, &[1, 1, 4, 4]).unwrap();
    match d.predict(&request(&z, 10)) {
        Err(Error::Transport {
            attempts, retryable, ..
        }) => {
            assert_eq!(attempts, 3);
            assert!(retryable);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(server.hits(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let server = Loopback::start(|_, path, _| match path {
        "/v1/health" => Reply::ok(HEALTH_OK),
        _ => Reply::status(413, "payload too large"),
    });
    let d = RemoteDenoiser::connect(config(&server.url), PredictionMode::Eps).unwrap();
    let z = seed_noise(1, &[1, 1, 4, 4]).unwrap();
    match d.predict(&request(&z, 10)) {
        Err(Error::Transport { retryable, message, .. }) => {
            assert!(!retryable);
            assert!(message.contains("413"));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(server.hits(), 2);
}

#[test]
fn malformed_responses_are_protocol_errors() {
    let server = Loopback::start(|_, path, _| match path {
        "/v1/health" => Reply::ok(HEALTH_OK),
        "/v1/predict" => Reply::ok(r#"{"output": {"shape": [3], "b64": "AACAPw=="}}"#),
        _ => Reply::ok("not json"),
    });
    let d = RemoteDenoiser::connect(config(&server.url), PredictionMode::Eps).unwrap();
    let z = seed_noise(1, &[1, 1, 4, 4]).unwrap();
    assert!(matches!(d.predict(&request(&z, 10)), Err(Error::Protocol(_))));
    let enc = d.encode(&EncodeRequest::Path {
        image_path: "x.png".into(),
    });
    assert!(matches!(enc, Err(Error::Protocol(_))));
}

#[test]
fn shape_mismatch_is_rejected() {
    let server = Loopback::start(|_, path, _| match path {
        "/v1/health" => Reply::ok(HEALTH_OK),
        _ => Reply::ok(r#"{"output": {"shape": [1], "b64": "AACAPw=="}}"#),
    });
    let d = RemoteDenoiser::connect(config(&server.url), PredictionMode::Eps).unwrap();
    let z = tensor(&[2], &[1.0, 2.0]);
    assert!(matches!(d.predict(&request(&z, 10)), Err(Error::Protocol(_))));
}

#[test]
fn unhealthy_server_is_refused() {
    let server = Loopback::start(|_, _, _| Reply::ok(r#"{"status":"loading","model_id":"m"}"#));
    let err = RemoteDenoiser::connect(config(&server.url), PredictionMode::Eps).unwrap_err();
    assert!(matches!(err, Error::Transport { retryable: false, .. }));
}

#[test]
fn unreachable_server_fails_the_health_check() {
    let url = {
        let s = Loopback::start(|_, _, _| Reply::ok(HEALTH_OK));
        s.url.clone()
    };
    let err = RemoteDenoiser::connect(config(&url), PredictionMode::Eps).unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 3, .. }));
}

#[test]
fn encode_returns_the_server_latent() {
    let server = Loopback::start(|_, path, body| match path {
        "/v1/health" => Reply::ok(HEALTH_OK),
        "/v1/encode" => {
            let req: Value = serde_json::from_str(body).unwrap();
            assert_eq!(req["image_path"], "cat.png");
            Reply::ok(serde_json::to_string(&WireTensor::encode(&Tensor::full(&[1, 4, 2, 2], 0.5).unwrap())).unwrap())
        }
        _ => Reply::status(404, ""),
    });
    let d = RemoteDenoiser::connect(config(&server.url), PredictionMode::Eps).unwrap();
    let z = d
        .encode(&EncodeRequest::Path {
            image_path: "cat.png".into(),
        })
        .unwrap();
    assert_eq!(z.shape(), &[1, 4, 2, 2]);
    assert!(z.data().iter().all(|&v| v == 0.5));
}
