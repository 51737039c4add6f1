use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use umsched::datagen::{build_training_set, read_dataset, DataGenConfig};
use umsched::decode::{greedy_decode, sampling_decode};
use umsched::model::evaluate_schedule;
use umsched::nn::{encode_input, forward, Arch, Params};
use umsched::online::{online_learn, OnlineHyper};
use umsched::oracle::subset_dp;
use umsched::tiform::lp_lower_bound;
use umsched::train::{train_from_file, TrainConfig};

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("umsched-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn generate_train_and_solve() {
    let arch = Arch { t_arch: 48, p_max_enc: 8, gamma: 8, ..Arch::tiny() };
    let dir = scratch("pipeline");
    let data = dir.join("train.jsonl");
    let cfg = DataGenConfig {
        case: 11,
        count: 6,
        n_lo: 3,
        n_hi: 5,
        seed: 21,
        alpha_max: 2,
        eta: arch.eta(),
        gamma: arch.gamma,
        max_horizon: arch.t_arch,
        micro_p_max: 4,
    };
    let summary = build_training_set(&cfg, &data).unwrap();
    let examples = read_dataset(&data).unwrap();
    assert_eq!(summary.examples, examples.len());
    assert_eq!(examples.len(), 6 * 2 * 2);

    let val: Vec<_> = examples.iter().step_by(5).map(|e| e.instance.clone()).collect();
    let tc = TrainConfig { lr0: 1e-2, max_epochs: 2, ..TrainConfig::default() };
    let (params, history) = train_from_file(&data, &val, &arch, &tc, None).unwrap();
    assert_eq!(history[0].epoch, 0);
    assert!(history.len() <= 3);

    let path = dir.join("params.bin");
    params.save(&path).unwrap();
    let params = Params::load(&path).unwrap();

    let hyper = OnlineHyper { max_iters: 60, ..OnlineHyper::default() };
    for (i, inst) in val.iter().enumerate() {
        let o = forward(&params, &encode_input(inst, &arch).unwrap()).unwrap();
        let greedy = evaluate_schedule(inst, &greedy_decode(&o.view(), inst)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let sampled = evaluate_schedule(inst, &sampling_decode(&o.view(), inst, &mut rng, 20)).unwrap();
        let online = online_learn(&params, inst, &hyper).unwrap();
        assert_eq!(evaluate_schedule(inst, &online.schedule).unwrap(), online.value);

        let (_, opt) = subset_dp(inst, 16).unwrap();
        let (lb, _) = lp_lower_bound(inst).unwrap();
        assert!(lb <= opt + 1e-6);
        for v in [greedy, sampled, online.value] {
            assert!(opt <= v + 1e-9);
        }
        assert!(sampled <= greedy);
        assert!(online.value <= greedy);
    }
    std::fs::remove_dir_all(&dir).ok();
}
