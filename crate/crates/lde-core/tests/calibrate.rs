//! One-off calibration runs for the desk-scale training oracles; kept
//! ignored since the acceptance suite re-runs the protocol with pinned
//! thresholds.

use std::time::Instant;

use lde_core::data::synth_dataset;
use lde_core::loss::psnr;
use lde_core::model::{EnhanceMode, LdeModel, ModelConfig};
use lde_core::tensor::Tensor;
use lde_core::train::{
    eval_cross_reconstruction, mean_content_gap, train_disentangle, train_enhance, TrainConfig,
    TrainState,
};

fn recon_psnr(model: &LdeModel<f32>, data: &[lde_core::data::ImagePair]) -> Vec<f64> {
    data.iter()
        .map(|pair| {
            let mut tape = model.tape();
            let s_l = tape.leaf(pair.low.clone());
            let parts = model.dis.forward(&mut tape, &model.store, s_l).unwrap();
            let rec = model
                .recon
                .forward(&mut tape, &model.store, parts.content, parts.illumination)
                .unwrap();
            psnr(&tape.value(rec).clamp01(), &pair.low).unwrap()
        })
        .collect()
}

fn pipeline_psnrs(
    model: &LdeModel<f32>,
    data: &[lde_core::data::ImagePair],
    mode: EnhanceMode,
) -> Vec<f64> {
    data.iter()
        .map(|pair| {
            let out: Tensor<f32> = model.enhance_image(&pair.low, mode).unwrap();
            psnr(&out, &pair.normal).unwrap()
        })
        .collect()
}

#[test]
#[ignore = "calibration only; run explicitly with --ignored --nocapture"]
fn calibrate_desk_training() {
    let data = synth_dataset(4, 64, 1).unwrap();
    let base_psnr: Vec<f64> = data
        .iter()
        .map(|p| psnr(&p.low, &p.normal).unwrap())
        .collect();
    println!("baseline psnr(S_l, S_t): {base_psnr:?}");

    let cfg = TrainConfig {
        total_steps: 300,
        seed: 42,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let mut model = LdeModel::<f32>::new(ModelConfig::default(), cfg.seed).unwrap();
    let untrained = LdeModel::<f32>::new(ModelConfig::default(), cfg.seed).unwrap();

    let untrained_gap = mean_content_gap(&untrained, &data).unwrap();
    let untrained_rows = eval_cross_reconstruction(&untrained, &data).unwrap();
    println!("untrained content gap: {untrained_gap}");
    println!("untrained swap rows:");
    for (l, v) in &untrained_rows.rows {
        println!("  {l}: {v:.2} dB");
    }

    let t0 = Instant::now();
    let mut state = TrainState::fresh(&model, &cfg);
    let trace = train_disentangle(&mut model, &data, &cfg, &mut state, |r| {
        if r.step % 25 == 0 {
            println!(
                "  dis step {:3} lr {:.2e} l_cc {:.5} l_recon {:.5} total {:.5}",
                r.step, r.lr, r.l_cc, r.l_recon, r.total
            );
        }
    })
    .unwrap();
    let stage1_secs = t0.elapsed().as_secs_f64();

    println!(
        "stage1: {} steps in {:.1}s  initial {:.5}  final {:.5}  ratio {:.4}",
        trace.len(),
        stage1_secs,
        trace[0].total,
        trace.last().unwrap().total,
        trace.last().unwrap().total / trace[0].total
    );
    let trained_gap = mean_content_gap(&model, &data).unwrap();
    println!(
        "content gap: untrained {untrained_gap:.5} trained {trained_gap:.5} improvement x{:.1}",
        untrained_gap / trained_gap
    );
    let rp = recon_psnr(&model, &data);
    println!("psnr(recon(C_l,I_l), S_l) per pair: {rp:?}");
    let trained_rows = eval_cross_reconstruction(&model, &data).unwrap();
    println!("trained swap rows (vs untrained delta):");
    for ((l, v), (_, u)) in trained_rows.rows.iter().zip(&untrained_rows.rows) {
        println!("  {l}: {v:.2} dB  (delta {:.2})", v - u);
    }

    // ---- stage 2, full enhancer ----
    let cfg2 = TrainConfig {
        total_steps: 500,
        seed: 43,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let mut full_model = LdeModel::<f32>::new(ModelConfig::default(), 0).unwrap();
    // carry over stage-1 parameters
    for (id, p) in model.store.iter() {
        full_model.store.get_mut(id).value.data.clone_from(&p.value.data);
    }
    let t1 = Instant::now();
    let mut state2 = TrainState::fresh(&full_model, &cfg2);
    let trace2 = train_enhance(
        &mut full_model,
        &data,
        &cfg2,
        &mut state2,
        EnhanceMode::Full,
        |r| {
            if r.step % 50 == 0 {
                println!(
                    "  enh step {:3} lr {:.2e} l1 {:.5} ssim {:.4} perc {:.6} total {:.5}",
                    r.step, r.lr, r.l1, r.ssim, r.perceptual, r.total
                );
            }
        },
    )
    .unwrap();
    let stage2_secs = t1.elapsed().as_secs_f64();
    println!(
        "stage2-full: {} steps in {:.1}s  initial {:.5}  final {:.5}  ratio {:.4}",
        trace2.len(),
        stage2_secs,
        trace2[0].total,
        trace2.last().unwrap().total,
        trace2.last().unwrap().total / trace2[0].total
    );
    let pp = pipeline_psnrs(&full_model, &data, EnhanceMode::Full);
    println!("pipeline psnr (full): {pp:?}  baseline {base_psnr:?}");

    // ---- stage 2, light enhancer ----
    let mut light_model = LdeModel::<f32>::new(ModelConfig::default(), 0).unwrap();
    for (id, p) in model.store.iter() {
        light_model.store.get_mut(id).value.data.clone_from(&p.value.data);
    }
    let t2 = Instant::now();
    let mut state3 = TrainState::fresh(&light_model, &cfg2);
    let trace3 = train_enhance(
        &mut light_model,
        &data,
        &cfg2,
        &mut state3,
        EnhanceMode::Light,
        |r| {
            if r.step % 100 == 0 {
                println!(
                    "  light step {:3} l1 {:.5} ssim {:.4} total {:.5}",
                    r.step, r.l1, r.ssim, r.total
                );
            }
        },
    )
    .unwrap();
    let light_secs = t2.elapsed().as_secs_f64();
    println!(
        "stage2-light: {} steps in {:.1}s  initial {:.5}  final {:.5}  ratio {:.4}",
        trace3.len(),
        light_secs,
        trace3[0].total,
        trace3.last().unwrap().total,
        trace3.last().unwrap().total / trace3[0].total
    );
    let lp = pipeline_psnrs(&light_model, &data, EnhanceMode::Light);
    println!("pipeline psnr (light): {lp:?}");
    println!(
        "seconds/step: stage1 {:.2}, stage2-full {:.2}, stage2-light {:.2}",
        stage1_secs / 300.0,
        stage2_secs / 500.0,
        light_secs / 500.0
    );
}
