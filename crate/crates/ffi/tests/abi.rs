use std::ffi::{CStr, CString};
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rps_core::agents::{DdpgAgent, DdpgConfig, DqnAgent, DqnConfig};
use rps_core::dialogue::STATE_DIM;
use rps_ffi::*;

fn last_error() -> String {
    let p = rps_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn gmm_env_episode_through_the_abi() {
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(rps_gmm_env_new(false, 20, 7, &mut env), RpsStatus::Ok);
        let dim = rps_gmm_env_observation_dim(env);
        assert_eq!(dim, 3);
        let mut obs = vec![0.0; dim];
        let mut len = 0;
        assert_eq!(rps_gmm_env_reset(env, obs.as_mut_ptr(), dim, &mut len), RpsStatus::Ok);
        assert_eq!(len, 3);
        let (mut reward, mut done, mut dist) = (0.0, false, 0.0);
        let mut steps = 0;
        while !done {
            let a = (steps as f64 * 1.7) % 20.0 - 10.0;
            let s = rps_gmm_env_step(env, a, obs.as_mut_ptr(), dim, &mut reward, &mut done, &mut dist);
            assert_eq!(s, RpsStatus::Ok);
            assert!((-1.0..=1.0).contains(&reward));
            steps += 1;
            if steps < 10 {
                assert!(dist.is_nan());
            } else {
                assert!(dist.is_finite() && dist >= 0.0);
            }
        }
        assert_eq!(steps, 20);
        let s = rps_gmm_env_step(env, 0.0, obs.as_mut_ptr(), dim, &mut reward, &mut done, &mut dist);
        assert_eq!(s, RpsStatus::Usage);
        assert!(last_error().contains("finished"));
        rps_gmm_env_free(env);
        rps_gmm_env_free(ptr::null_mut());
    }
}

#[test]
fn same_seed_same_trajectory() {
    let run = || unsafe {
        let mut env = ptr::null_mut();
        rps_gmm_env_new(true, 15, 3, &mut env);
        let mut obs = [0.0; 3];
        rps_gmm_env_reset(env, obs.as_mut_ptr(), 3, ptr::null_mut());
        let mut out = Vec::new();
        for i in 0..15 {
            let mut r = 0.0;
            rps_gmm_env_step(
                env,
                i as f64 - 7.0,
                obs.as_mut_ptr(),
                3,
                &mut r,
                ptr::null_mut(),
                ptr::null_mut(),
            );
            out.push((obs, r));
        }
        rps_gmm_env_free(env);
        out
    };
    assert_eq!(run(), run());
}

#[test]
fn null_and_short_buffers_are_reported() {
    unsafe {
        assert_eq!(rps_gmm_env_new(false, 5, 1, ptr::null_mut()), RpsStatus::NullPointer);
        assert!(last_error().contains("out_env"));
        let mut env = ptr::null_mut();
        rps_gmm_env_new(false, 5, 1, &mut env);
        let mut full = [0.0; 3];
        assert_eq!(
            rps_gmm_env_step(
                env,
                0.0,
                full.as_mut_ptr(),
                3,
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut()
            ),
            RpsStatus::Usage
        );
        let mut obs = [0.0; 2];
        let mut needed = 0;
        assert_eq!(
            rps_gmm_env_reset(env, obs.as_mut_ptr(), 2, &mut needed),
            RpsStatus::InvalidArgument
        );
        assert_eq!(needed, 3);
        assert_eq!(
            rps_gmm_env_reset(ptr::null_mut(), obs.as_mut_ptr(), 2, &mut needed),
            RpsStatus::NullPointer
        );
        rps_gmm_env_free(env);
    }
}

#[test]
fn mixture_distance_matches_core() {
    let w = [0.5, 0.5];
    let (m1, v1) = ([0.0, 5.0], [1.0, 2.0]);
    let (m2, v2) = ([5.1, 0.2], [2.0, 1.5]);
    let mut d = -1.0;
    let s = unsafe {
        rps_mixture_distance(
            2,
            w.as_ptr(),
            m1.as_ptr(),
            v1.as_ptr(),
            w.as_ptr(),
            m2.as_ptr(),
            v2.as_ptr(),
            &mut d,
        )
    };
    assert_eq!(s, RpsStatus::Ok);
    let mk = |m: [f64; 2], v: [f64; 2]| {
        rps_core::gmm::Mixture::uniform(vec![
            rps_core::gmm::Gaussian1D::new(m[0], v[0]).unwrap(),
            rps_core::gmm::Gaussian1D::new(m[1], v[1]).unwrap(),
        ])
        .unwrap()
    };
    let expected = rps_core::gmm::mixture_distance(&mk(m1, v1), &mk(m2, v2)).unwrap();
    assert_eq!(d, expected);

    let bad = [0.9, 0.9];
    let s = unsafe {
        rps_mixture_distance(
            2,
            bad.as_ptr(),
            m1.as_ptr(),
            v1.as_ptr(),
            w.as_ptr(),
            m2.as_ptr(),
            v2.as_ptr(),
            &mut d,
        )
    };
    assert_eq!(s, RpsStatus::Config);
    let s = unsafe {
        rps_mixture_distance(
            0,
            ptr::null(),
            ptr::null(),
            ptr::null(),
            ptr::null(),
            ptr::null(),
            ptr::null(),
            &mut d,
        )
    };
    assert_eq!(s, RpsStatus::InvalidArgument);
}

#[test]
fn text_similarity() {
    let a = CString::new("the account was closed").unwrap();
    let b = CString::new("the account was closed").unwrap();
    let c = CString::new("zebra").unwrap();
    let (mut same, mut diff) = (0.0, 0.0);
    unsafe {
        assert_eq!(rps_text_similarity(a.as_ptr(), b.as_ptr(), &mut same), RpsStatus::Ok);
        assert_eq!(rps_text_similarity(a.as_ptr(), c.as_ptr(), &mut diff), RpsStatus::Ok);
        assert_eq!(
            rps_text_similarity(ptr::null(), c.as_ptr(), &mut diff),
            RpsStatus::NullPointer
        );
    }
    assert!((same - 1.0).abs() < 1e-12);
    assert!(diff < 0.5);
}

#[test]
fn saved_agents_load_and_act() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ddpg = DdpgAgent::new(3, DdpgConfig::default(), &mut rng).unwrap();
    let dqn = DqnAgent::new(STATE_DIM, DqnConfig::default(), &mut rng).unwrap();
    let dp = dir.path().join("ddpg.ckpt");
    let qp = dir.path().join("dqn.ckpt");
    ddpg.save(&dp).unwrap();
    dqn.save(&qp).unwrap();
    let obs = [0.3, 0.5, 0.2];
    let state = [0.1; STATE_DIM];
    unsafe {
        let path = CString::new(dp.to_str().unwrap()).unwrap();
        let mut h = ptr::null_mut();
        assert_eq!(rps_ddpg_load(path.as_ptr(), 3, &mut h), RpsStatus::Ok);
        let mut a = 0.0;
        assert_eq!(rps_ddpg_act(h, obs.as_ptr(), 3, &mut a), RpsStatus::Ok);
        assert_eq!(a, ddpg.act(&obs, false, &mut rng).unwrap());
        assert_ne!(rps_ddpg_act(h, obs.as_ptr(), 2, &mut a), RpsStatus::Ok);
        rps_ddpg_free(h);

        let path = CString::new(qp.to_str().unwrap()).unwrap();
        let mut q = ptr::null_mut();
        assert_eq!(rps_dqn_load(path.as_ptr(), &mut q), RpsStatus::Ok);
        let mut i = 99u32;
        assert_eq!(rps_dqn_greedy(q, state.as_ptr(), STATE_DIM, &mut i), RpsStatus::Ok);
        assert_eq!(i as usize, dqn.greedy(&state).unwrap());
        rps_dqn_free(q);

        let missing = CString::new(dir.path().join("none.ckpt").to_str().unwrap()).unwrap();
        assert_eq!(rps_dqn_load(missing.as_ptr(), &mut q), RpsStatus::Io);
        let wrong = CString::new(dp.to_str().unwrap()).unwrap();
        assert_eq!(rps_dqn_load(wrong.as_ptr(), &mut q), RpsStatus::Checkpoint);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(rps_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/rps.h")).unwrap();
    for name in [
        "rps_last_error_message",
        "rps_gmm_env_new",
        "rps_gmm_env_step",
        "rps_gmm_env_free",
        "rps_ddpg_load",
        "rps_dqn_greedy",
        "rps_mixture_distance",
        "rps_text_similarity",
        "RPS_STATUS_NOT_YET_ESTIMABLE",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"rps.h\"\nint main(void) { RpsGmmEnv *e = 0; return rps_gmm_env_new(false, 5, 1, &e) == RPS_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    match std::process::Command::new("cc")
        .args([
            "-fsyntax-only",
            "-Wall",
            "-Werror",
            "-I",
            concat!(env!("CARGO_MANIFEST_DIR"), "/include"),
        ])
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler found; skipped the syntax check"),
    }
}
