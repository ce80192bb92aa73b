use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rigidflow::denoise::*;
use rigidflow::flow_cont::*;
use rigidflow::rot3::{exp_at, geodesic_dist, sample_uniform_so3};
use rigidflow::*;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let base = Rotation::identity();
    let datum = vec![
        RigidFrame::new(exp_at(&base, &TangentVec::new(Vector3::new(0.4, -0.2, 0.9), base)), Vector3::new(1.0, -0.5, 0.25)),
        RigidFrame::new(exp_at(&base, &TangentVec::new(Vector3::new(-0.7, 0.3, 0.1), base)), Vector3::new(-1.0, 0.5, -0.25)),
    ];
    let dataset = vec![TrainSample { frames1: datum.clone(), tokens1: vec![1, 2] }];
    let token_syms: Vec<Vec<Rotation>> = vec![vec![Rotation::identity()]; 3];
    let cfg = ToyConfig { vocab_size: 2, hidden: 128, self_conditioning: false };
    let mut model = ToyModel::new(cfg, &mut rng);
    let opts = TrainOptions { epochs: 4000, lr: 2e-4, lr_floor: 0.05, steps_per_epoch: 16, t_epsilon: 1e-3, weight_epsilon: 0.01 };
    let curve = toy_train(&mut model, &dataset, &token_syms, &opts, &mut rng).unwrap();
    println!("loss: {:.3} -> {:.3}", curve[..50].iter().sum::<f64>()/50.0, curve[curve.len()-50..].iter().sum::<f64>()/50.0);

    for &t in &[0.1, 0.5, 0.7, 0.9, 0.95, 0.99] {
        let mut num = 0.0; let mut den = 0.0; let mut dotsum = 0.0; let mut n2 = 0.0;
        for _ in 0..2000 {
            let g: Rotation = sample_uniform_so3(&mut rng);
            let d: Vec<RigidFrame> = datum.iter().map(|f| RigidFrame::new(f.rot.compose(&g), g.apply_row(&f.trans))).collect();
            let f0 = sample_prior(2, &mut rng).unwrap();
            let path = match make_training_target(&f0, &d, &vec![vec![Rotation::identity()]; 2], t, &mut rng) { Ok(p) => p, Err(_) => continue };
            let tokens: Vec<usize> = vec![if rng.gen::<f64>() < t {1} else {0}, if rng.gen::<f64>() < t {2} else {0}];
            let state = FlowState::new(path.frames_t.clone(), tokens, t).unwrap();
            let fwd = model.forward(&state, None).unwrap();
            for i in 0..2 {
                let w_true = right_to_left(&(path.target_rot_vel[i].w * (1.0 - t)), &path.frames_t[i].rot);
                let w_pred = fwd.rot_body[i];
                num += (w_pred - w_true).norm_squared();
                den += w_true.norm_squared();
                dotsum += w_pred.dot(&w_true);
                n2 += w_true.norm_squared();
            }
        }
        println!("t={t:.2}: rel_err {:.3}, coef {:.3}", (num/den).sqrt(), dotsum/n2);
    }

    // Full sampling check.
    let steps = 100; let h = 1.0 / steps as f64;
    let mut rot_err = 0.0; let mut sep_err = 0.0; let mut hits = 0; let trials = 128;
    for _ in 0..trials {
        let mut frames = sample_prior(2, &mut rng).unwrap();
        let mut tokens = vec![0usize; 2];
        for i in 0..steps {
            let t = i as f64 * h;
            let state = FlowState::new(frames.clone(), tokens.clone(), t).unwrap();
            let out = model.evaluate(&state).unwrap();
            frames = integrate_step(&frames, &out.rot_vel, &out.trans_vel, t, h, RotSchedule::Constant).unwrap();
            let rates = rigidflow::flow_disc::generative_rates(&rigidflow::flow_disc::TokenState { tokens: tokens.clone(), t }, &out.posterior, &rigidflow::flow_disc::SamplingKnobs::default()).unwrap();
            tokens = rigidflow::flow_disc::ctmc_step(&rigidflow::flow_disc::TokenState { tokens, t }, &rates, h, &mut rng).unwrap().tokens;
        }
        if tokens == vec![1,2] || tokens == vec![2,1] { hits += 1; }
        let rel_s = frames[0].rot.inverse().compose(&frames[1].rot);
        let rel_d = datum[0].rot.inverse().compose(&datum[1].rot);
        rot_err += geodesic_dist(&rel_s, &rel_d);
        sep_err += ((frames[0].trans - frames[1].trans).norm() - (datum[0].trans - datum[1].trans).norm()).abs();
    }
    println!("sampling: rot_err {:.3} sep_err {:.3} tokens {hits}/{trials}", rot_err / trials as f64, sep_err / trials as f64);
}
