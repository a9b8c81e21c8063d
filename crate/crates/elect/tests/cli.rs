mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{Loopback, Reply, HEALTH_OK};
use elect::io::{read_elct, write_elct};
use elect::wire::{PredictRequest, PredictResponse, WireTensor};
use elect_core::denoiser::{Denoiser, DenoiserRequest};
use elect_core::oracle::PointTargetOracle;
use elect_core::rng::seed_noise;
use elect_core::schedule::{make_schedule, ScheduleKind};
use elect_core::Tensor;
use serde_json::Value;

fn elect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elect"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn elect")
}

fn stdout_json(out: &Output) -> Value {
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bench_writes_results_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    stdout_json(&elect(&["bench", "--tasks", "4", "--n", "1,3", "--out", out]));
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "task,method,n,candidate_id,seed,stop_step,nfe,bg_mse,psnr,ssim,gt_bg_mse"
    );
    // vanilla once plus three methods at two candidate counts, per task
    assert_eq!(lines.len() - 1, 4 * 7);
    let summary = read_json(&dir.path().join("summary.json"));
    assert_eq!(summary["tasks"], 4);
    assert_eq!(summary["points"].as_array().unwrap().len(), 7);
    assert!(summary["points"]
        .as_array()
        .unwrap()
        .iter()
        .any(|p| p["on_front"] == true));
}

#[test]
fn bench_with_the_documented_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    stdout_json(&elect(&[
        "bench", "--tasks", "100", "--n", "10", "--t-stop", "60", "--out", out,
    ]));
    assert!(dir.path().join("results.csv").exists());
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn vanilla_only_bench_has_one_row_per_task_at_full_nfe() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    stdout_json(&elect(&[
        "bench",
        "--tasks",
        "3",
        "--methods",
        "vanilla",
        "--n",
        "1",
        "--out",
        out,
    ]));
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.split(',').nth(6) == Some("100")));
}

#[test]
fn unreachable_remote_exits_3() {
    let out = elect(&["edit", "--denoiser", "remote:http://down"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("http://down"));
}

#[test]
fn edit_trace_reports_500_nfe() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let summary = stdout_json(&elect(&[
        "edit", "--n", "11", "--t-stop", "60", "--trace", "--out", out,
    ]));
    assert_eq!(summary["nfe"], 500);
    let trace = read_json(&dir.path().join("trace.json"));
    assert_eq!(trace["nfe"], 500);
    // The stop step is predicted for every candidate but counted once.
    assert_eq!(trace["model_calls"], 2 * (11 * 41 + 59));
    assert_eq!(trace["stop_step"], 60);
    assert_eq!(trace["candidates"].as_array().unwrap().len(), 11);
    assert_eq!(trace["step_scores"].as_array().unwrap().len(), 41);
    assert!(trace["chosen_id"].is_u64());
    assert!(trace["wall_clock_ms"].is_null());
    assert!(dir.path().join("edited.elct").exists());
}

#[test]
fn bestofn_runs_every_candidate_to_the_end() {
    let dir = tempfile::tempdir().unwrap();
    let summary = stdout_json(&elect(&["bestofn", "--n", "5", "--out", dir.path().to_str().unwrap()]));
    assert_eq!(summary["nfe"], 500);
    assert_eq!(summary["method"], "best_of_n");
}

#[test]
fn config_errors_exit_2() {
    for args in [
        &["edit", "--t-stop", "200"][..],
        &["edit", "--jobs", "0"],
        &["edit", "--denoiser", "gpu"],
        &["edit", "--schedule", "euler"],
        &["edit", "--adaptive", "--tau", "2"],
        &["edit", "--frobnicate"],
        &["edit", "--denoiser", "analytic:t.elct", "--source", "s.elct"],
        &["edit", "--source", "s.elct"],
        &["bench", "--methods", "elect_prompt"],
        &["prompt-edit", "--mllm", "http://localhost:1"],
    ] {
        let out = elect(args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn missing_input_file_exits_1_with_the_path() {
    let out = elect(&[
        "edit",
        "--denoiser",
        "analytic:/nonexistent/target.elct",
        "--source",
        "/nonexistent/source.elct",
        "--instruction",
        "x",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/source.elct"));
}

fn write_pair(dir: &Path) -> (Tensor, Tensor) {
    let source = seed_noise(3, &[1, 2, 6, 6]).unwrap();
    let target = source.map(|v| v * 0.5 + 0.25).unwrap();
    write_elct(&dir.join("source.elct"), &source).unwrap();
    write_elct(&dir.join("target.elct"), &target).unwrap();
    (source, target)
}

#[test]
fn analytic_denoiser_lands_on_its_target() {
    let dir = tempfile::tempdir().unwrap();
    let (_, target) = write_pair(dir.path());
    let target_arg = format!("analytic:{}", dir.path().join("target.elct").display());
    let src = dir.path().join("source.elct");
    let out = dir.path().join("out");
    stdout_json(&elect(&[
        "edit",
        "--n",
        "3",
        "--denoiser",
        &target_arg,
        "--source",
        src.to_str().unwrap(),
        "--instruction",
        "brighten",
        "--out",
        out.to_str().unwrap(),
    ]));
    let edited = read_elct(&out.join("edited.elct")).unwrap();
    assert!(edited.max_abs_diff(&target).unwrap() < 1e-4);
}

#[test]
fn task_dir_with_mask_reports_background_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let task = dir.path().join("task");
    std::fs::create_dir(&task).unwrap();
    let (source, _) = write_pair(&task);
    std::fs::rename(task.join("target.elct"), dir.path().join("target.elct")).unwrap();
    write_elct(
        &task.join("mask.elct"),
        &Tensor::from_fn(&[6, 6], |i| (i < 6) as u8 as f32).unwrap(),
    )
    .unwrap();
    std::fs::write(task.join("instruction.txt"), "brighten\n").unwrap();
    std::fs::write(task.join("meta.json"), "{}").unwrap();
    let target_arg = format!("analytic:{}", dir.path().join("target.elct").display());
    let out = dir.path().join("out");
    let summary = stdout_json(&elect(&[
        "edit",
        "--n",
        "2",
        "--denoiser",
        &target_arg,
        "--task-dir",
        task.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert!(summary["metrics"]["bg_mse"].as_f64().unwrap() > 0.0);
    assert_eq!(source.shape(), read_elct(&out.join("edited.elct")).unwrap().shape());
}

#[test]
fn remote_denoiser_matches_the_analytic_run() {
    let dir = tempfile::tempdir().unwrap();
    let (_, target) = write_pair(dir.path());
    let oracle = PointTargetOracle::new(make_schedule(ScheduleKind::Ddim, 30).unwrap(), target);
    let server = Loopback::start(move |_, path, body| match path {
        "/v1/health" => Reply::ok(HEALTH_OK),
        _ => {
            let req: PredictRequest = serde_json::from_str(body).unwrap();
            let latent = req.latent.decode().unwrap();
            let image = req.image_latent.map(|w| w.decode().unwrap());
            let out = oracle
                .predict(&DenoiserRequest {
                    latent: &latent,
                    t: req.t,
                    image_latent: image.as_ref(),
                    prompt: req.prompt.as_deref(),
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
    let src = dir.path().join("source.elct");
    let run = |denoiser: &str, out: &Path| {
        stdout_json(&elect(&[
            "edit",
            "--n",
            "2",
            "--steps",
            "30",
            "--t-stop",
            "20",
            "--denoiser",
            denoiser,
            "--source",
            src.to_str().unwrap(),
            "--instruction",
            "brighten",
            "--trace",
            "--out",
            out.to_str().unwrap(),
        ]))
    };
    let (ra, rb) = (dir.path().join("remote"), dir.path().join("local"));
    let a = run(&format!("remote:{}", server.url), &ra);
    let b = run(&format!("analytic:{}", dir.path().join("target.elct").display()), &rb);
    assert_eq!(a["selection_scores"], b["selection_scores"]);
    let (ta, tb) = (read_json(&ra.join("trace.json")), read_json(&rb.join("trace.json")));
    assert_eq!(ta["step_scores"], tb["step_scores"]);
    assert_eq!(
        std::fs::read(ra.join("edited.elct")).unwrap(),
        std::fs::read(rb.join("edited.elct")).unwrap()
    );
}

#[test]
fn trace_command_dumps_maps_and_step_scores() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    stdout_json(&elect(&["trace", "--n", "3", "--out", out]));
    let maps: Vec<String> = std::fs::read_dir(dir.path().join("maps"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    // 3 candidates over a 20-step window, plus the selection maps
    assert_eq!(maps.iter().filter(|m| m.starts_with("relmap_")).count(), 60);
    assert!(maps.contains(&"relmap_c2_s3_t81.elct".to_string()));
    assert!(maps.contains(&"mean_map_t60.elct".to_string()));
    assert!(maps.contains(&"weight_t60.elct".to_string()));
    let csv = std::fs::read_to_string(dir.path().join("step_scores.csv")).unwrap();
    // steps 100 down to 60 inclusive
    assert_eq!(csv.lines().count(), 1 + 3 * 41);
}

#[test]
fn prompt_edit_with_the_mock_judge() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let failed = stdout_json(&elect(&["prompt-edit", "--n", "3", "--n-prompts", "4", "--out", out]));
    assert_eq!(failed["prompt_selection"], true);
    assert_eq!(failed["variants"].as_array().unwrap().len(), 4);
    assert_eq!(failed["prompt_run"]["nfe"], 4 * 40 + 60);
    let passed = stdout_json(&elect(&[
        "prompt-edit",
        "--n",
        "3",
        "--mock-judgment",
        "pass",
        "--out",
        out,
    ]));
    assert_eq!(passed["prompt_selection"], false);
    assert!(passed.get("prompt_run").is_none());
}

#[test]
fn adaptive_edit_stops_no_earlier_than_the_floor() {
    let dir = tempfile::tempdir().unwrap();
    let summary = stdout_json(&elect(&[
        "edit",
        "--n",
        "4",
        "--adaptive",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert_eq!(summary["method"], "elect_adaptive");
    let stop = summary["stop_step"].as_u64().unwrap();
    assert!(stop <= 80);
    assert_eq!(summary["nfe"], 4 * (100 - stop) + stop);
}
