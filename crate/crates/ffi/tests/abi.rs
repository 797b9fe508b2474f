use std::ffi::{CStr, CString};
use std::ptr;

use v0lver_ffi::*;

fn last_error() -> String {
    let p = v0lver_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn math_entry_points() {
    let mut l = 0.0;
    assert_eq!(unsafe { v0lver_max_lvr(100.0, 100.0, 4.0, &mut l) }, V0lverStatus::Ok);
    assert!((l - 100.0).abs() < 1e-12);

    let mut m = V0lverMove::default();
    assert_eq!(unsafe { v0lver_rebated_move(100.0, 100.0, 4.0, 0.5, 4.0, &mut m) }, V0lverStatus::Ok);
    assert!((m.payoff - 50.0).abs() < 1e-9);
    assert!((m.new_x / m.new_y - 4.0).abs() < 1e-12);

    let mut s = V0lverSettlement::default();
    assert_eq!(unsafe { v0lver_settle_market(100.0, 100.0, 10.0, 5.0, &mut s) }, V0lverStatus::Ok);
    assert!((s.price - 110.0 / 105.0).abs() < 1e-12);

    assert_eq!(unsafe { v0lver_max_lvr(-1.0, 100.0, 1.0, &mut l) }, V0lverStatus::Math);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { v0lver_rebated_move(100.0, 100.0, 2.0, 1.0, 2.0, &mut m) }, V0lverStatus::Math);
}

#[test]
fn scenario_and_run_handles() {
    let toml = CString::new("version = 1\nhorizon = 40\nruns = 3\n").unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { v0lver_scenario_from_toml(toml.as_ptr(), &mut sc) }, V0lverStatus::Ok);
    unsafe { v0lver_scenario_set_seed(sc, 5) };

    let mut run = ptr::null_mut();
    assert_eq!(unsafe { v0lver_run(sc, &mut run) }, V0lverStatus::Ok);
    let (mut realized, mut baseline) = (0.0, 0.0);
    assert_eq!(unsafe { v0lver_run_lvr(run, &mut realized, &mut baseline) }, V0lverStatus::Ok);
    assert!(realized > 0.0 && realized < baseline);

    let json = unsafe { v0lver_run_summary_json(run) };
    let v: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    assert_eq!(v["seed"], 5);
    assert_eq!(v["blocks"], 40);
    unsafe { v0lver_string_free(json) };

    let mut report = ptr::null_mut();
    assert_eq!(unsafe { v0lver_lvr_experiment_json(sc, 1, &mut report) }, V0lverStatus::Ok);
    let r: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(report) }.to_str().unwrap()).unwrap();
    assert_eq!(r["runs"], 3);
    unsafe {
        v0lver_string_free(report);
        v0lver_run_free(run);
        v0lver_scenario_free(sc);
    }
}

#[test]
fn bad_scenarios_are_config_errors() {
    let mut sc = ptr::null_mut();
    let bad = CString::new("version = 1\nhorizon = 0\n").unwrap();
    assert_eq!(unsafe { v0lver_scenario_from_toml(bad.as_ptr(), &mut sc) }, V0lverStatus::Config);
    assert!(sc.is_null());
    assert!(last_error().contains("horizon"));
    assert_eq!(unsafe { v0lver_scenario_from_toml(ptr::null(), &mut sc) }, V0lverStatus::NullArgument);
    let bytes = [0xffu8, 0];
    assert_eq!(
        unsafe { v0lver_scenario_from_toml(bytes.as_ptr().cast(), &mut sc) },
        V0lverStatus::InvalidString
    );
}

#[test]
fn chain_lifecycle() {
    let sc = v0lver_scenario_default();
    let mut chain = ptr::null_mut();
    assert_eq!(unsafe { v0lver_chain_new(sc, &mut chain) }, V0lverStatus::Ok);
    let mut oct = 0;
    unsafe {
        assert_eq!(v0lver_chain_submit(chain, 1, false, 0.5, 0.0, 77, &mut oct), V0lverStatus::Ok);
        assert_eq!(v0lver_chain_insert_mempool(chain, 0), V0lverStatus::Ok);
        assert_eq!(v0lver_chain_set_external_price(chain, 1.01), V0lverStatus::Ok);
        let mut payoff = 0.0;
        assert_eq!(v0lver_chain_update(chain, 0, 0, 1.01, &mut payoff), V0lverStatus::Ok);
        assert!(payoff > 0.0);
        // Second update in the same block.
        assert_eq!(v0lver_chain_update(chain, 1, 0, 1.01, ptr::null_mut()), V0lverStatus::Rejected);
        // Forged reveal, then the real one.
        assert_eq!(v0lver_chain_reveal(chain, oct, 1, false, 0.5, 0.0, 78), V0lverStatus::Rejected);
        assert_eq!(v0lver_chain_reveal(chain, oct, 1, false, 0.5, 0.0, 77), V0lverStatus::Ok);
        let (x0, y0) = {
            let (mut x, mut y, mut vx, mut vy) = (0.0, 0.0, 0.0, 0.0);
            v0lver_chain_reserves(chain, &mut x, &mut y, &mut vx, &mut vy);
            (x, y)
        };
        assert_eq!(v0lver_chain_advance(chain), V0lverStatus::Ok);
        assert_eq!(v0lver_chain_height(chain), 1);
        let (mut x, mut y, mut vx, mut vy) = (0.0, 0.0, 0.0, 0.0);
        v0lver_chain_reserves(chain, &mut x, &mut y, &mut vx, &mut vy);
        assert!(x > x0 && y > y0, "escrow returned to the pool");
        v0lver_chain_free(chain);
        v0lver_scenario_free(sc);
        assert_eq!(v0lver_chain_height(ptr::null()), u64::MAX);
    }
}
