use cslow_ffi::*;
use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

fn fixture(name: &str) -> CString {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(format!("{name}.v"));
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(cslow_last_error()) }.to_string_lossy().into_owned()
}

fn load(name: &str) -> *mut CslowDesign {
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { cslow_design_load(fixture(name).as_ptr(), ptr::null(), &mut d) }, CslowStatus::Ok);
    d
}

#[test]
fn counter_round_trip() {
    let d = load("counter");
    let mut t = 0;
    assert_eq!(unsafe { cslow_design_t2ild(d, &mut t) }, CslowStatus::Ok);
    assert_eq!(t, 8);
    let opts = CslowOptions {
        cmf: 3,
        cycles: 200,
        ..cslow_options_default()
    };
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { cslow_csr(d, &opts, ptr::null(), &mut r) }, CslowStatus::Ok);
    let v = unsafe { CStr::from_ptr(cslow_result_verilog(r)) }.to_str().unwrap();
    assert!(v.contains("q_sp1"), "{v}");
    let sched: serde_json::Value =
        serde_json::from_str(unsafe { CStr::from_ptr(cslow_result_schedule_json(r)) }.to_str().unwrap()).unwrap();
    assert_eq!(sched["cmf"], 3);
    let report: serde_json::Value =
        serde_json::from_str(unsafe { CStr::from_ptr(cslow_result_report_json(r)) }.to_str().unwrap()).unwrap();
    assert_eq!(report["sp_register_bits"].as_u64().unwrap(), unsafe { cslow_result_register_bits(r) });
    let mut pass = -1;
    assert_eq!(unsafe { cslow_check(d, r, &mut pass) }, CslowStatus::Ok);
    assert_eq!(pass, 1);
    unsafe {
        cslow_result_free(r);
        cslow_design_free(d);
    }
}

#[test]
fn fault_is_detected_through_the_abi() {
    let d = load("alu");
    let opts = CslowOptions {
        cmf: 2,
        cycles: 200,
        ..cslow_options_default()
    };
    let mut r = ptr::null_mut();
    let mut clean = ptr::null_mut();
    unsafe {
        assert_eq!(cslow_csr(d, &opts, ptr::null(), &mut clean), CslowStatus::Ok);
        let text = CStr::from_ptr(cslow_result_verilog(clean)).to_str().unwrap();
        let reg = text
            .lines()
            .filter(|l| l.trim_start().starts_with("reg"))
            .flat_map(|l| l.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')))
            .find(|w| w.ends_with("_sp1"))
            .unwrap();
        let fault = CString::new(reg).unwrap();
        assert_eq!(cslow_csr(d, &opts, fault.as_ptr(), &mut r), CslowStatus::Ok);
        let mut pass = -1;
        assert_eq!(cslow_check(d, r, &mut pass), CslowStatus::Ok);
        assert_eq!(pass, 0);
        assert!(!last_error().is_empty());
        cslow_result_free(r);
        cslow_result_free(clean);
        cslow_design_free(d);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut d = ptr::null_mut();
    unsafe {
        assert_eq!(cslow_design_load(ptr::null(), ptr::null(), &mut d), CslowStatus::NullArgument);
        let missing = CString::new("/nonexistent/x.v").unwrap();
        assert_eq!(cslow_design_load(missing.as_ptr(), ptr::null(), &mut d), CslowStatus::UserError);
        assert!(d.is_null());
        assert!(last_error().contains("x.v"), "{}", last_error());
        let d = load("counter");
        assert!(last_error().is_empty());
        let opts = CslowOptions {
            cmf: 0,
            ..cslow_options_default()
        };
        let mut r = ptr::null_mut();
        assert_ne!(cslow_csr(d, &opts, ptr::null(), &mut r), CslowStatus::Ok);
        assert!(r.is_null());
        let bad = CString::new("nope_sp9").unwrap();
        let opts = cslow_options_default();
        assert_ne!(cslow_csr(d, &opts, bad.as_ptr(), &mut r), CslowStatus::Ok);
        assert!(cslow_result_verilog(ptr::null()).is_null());
        cslow_design_free(d);
        cslow_design_free(ptr::null_mut());
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which("cc") else {
        eprintln!("no C compiler; skipped");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"cslow.h\"\nint main(void) {\n  CslowOptions o = cslow_options_default();\n  CslowDesign *d = 0;\n  \
         return cslow_design_load(0, 0, &d) == CSLOW_STATUS_NULL_ARGUMENT && o.cmf == 2 ? 0 : 1;\n}\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let st = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(st.success());
}

fn which(bin: &str) -> Result<PathBuf, ()> {
    std::env::var_os("PATH")
        .and_then(|p| std::env::split_paths(&p).map(|d| d.join(bin)).find(|p| p.exists()))
        .ok_or(())
}
