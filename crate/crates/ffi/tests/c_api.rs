use std::ffi::{CStr, CString};
use std::ptr;

use grsvnet_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(grsv_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn matrix(rows: usize, cols: usize, data: &[f64]) -> *mut GrsvMatrix {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { grsv_matrix_new(rows, cols, data.as_ptr(), &mut m) },
        GrsvStatus::Ok
    );
    m
}

#[test]
fn nuclear_norm_of_rank_one() {
    // u vᵀ with ‖u‖ = 3, ‖v‖ = 2
    let u = [1.0, 2.0, 2.0];
    let v = [0.0, 2.0];
    let data: Vec<f64> = u
        .iter()
        .flat_map(|a| v.iter().map(move |b| a * b))
        .collect();
    let m = matrix(3, 2, &data);
    let mut norm = 0.0;
    assert_eq!(unsafe { grsv_nuclear_norm(m, &mut norm) }, GrsvStatus::Ok);
    assert!((norm - 6.0).abs() < 1e-12);
    assert_eq!(last_error(), "");

    let mut g = ptr::null_mut();
    assert_eq!(
        unsafe { grsv_nuclear_norm_subgradient(m, 1e-6, &mut g) },
        GrsvStatus::Ok
    );
    assert_eq!(
        unsafe { (grsv_matrix_rows(g), grsv_matrix_cols(g)) },
        (3, 2)
    );
    let mut out = [0.0; 6];
    assert_eq!(
        unsafe { grsv_matrix_copy(g, out.as_mut_ptr(), 6) },
        GrsvStatus::Ok
    );
    for (k, value) in out.iter().enumerate() {
        let expected = u[k / 2] / 3.0 * v[k % 2] / 2.0;
        assert!((value - expected).abs() < 1e-12);
    }
    unsafe {
        grsv_matrix_free(g);
        grsv_matrix_free(m);
    }
}

#[test]
fn ole_loss_and_gradient() {
    // two classes on the same unit direction: 2 − √2
    let m = matrix(3, 2, &[0.6, 0.6, 0.0, 0.0, 0.8, 0.8]);
    let labels = [1usize, 2];
    let mut value = f64::NAN;
    let mut grad = ptr::null_mut();
    let status = unsafe { grsv_ole_loss(m, labels.as_ptr(), 2, 1e-6, &mut value, &mut grad) };
    assert_eq!(status, GrsvStatus::Ok);
    assert!((value - (2.0 - 2f64.sqrt())).abs() < 1e-12);
    assert!(!grad.is_null());
    let mut value2 = 0.0;
    let status =
        unsafe { grsv_ole_loss(m, labels.as_ptr(), 2, 1e-6, &mut value2, ptr::null_mut()) };
    assert_eq!(status, GrsvStatus::Ok);
    assert_eq!(value, value2);
    unsafe {
        grsv_matrix_free(grad);
        grsv_matrix_free(m);
    }
}

#[test]
fn subspace_fit_and_predict() {
    // class 1 along e1, class 2 along e2, as columns of a 3 × 4 matrix
    let m = matrix(
        3,
        4,
        &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0, -3.0, 0.0, 0.0, 0.0, 0.0],
    );
    let labels = [1usize, 1, 2, 2];
    let mut set = ptr::null_mut();
    assert_eq!(
        unsafe { grsv_subspace_fit(m, labels.as_ptr(), 4, 2, 0.1, &mut set) },
        GrsvStatus::Ok
    );
    assert_eq!(unsafe { grsv_subspace_classes(set) }, 2);
    let mut rank = 0;
    assert_eq!(
        unsafe { grsv_subspace_rank(set, 2, &mut rank) },
        GrsvStatus::Ok
    );
    assert_eq!(rank, 1);
    assert_eq!(
        unsafe { grsv_subspace_rank(set, 3, &mut rank) },
        GrsvStatus::InvalidArgument
    );

    let (mut label, mut probs, mut degenerate) = (0usize, [0.0; 2], -1);
    let z = [0.1, 5.0, 0.0];
    let status = unsafe {
        grsv_subspace_predict(
            set,
            z.as_ptr(),
            3,
            1e-6,
            &mut label,
            probs.as_mut_ptr(),
            2,
            &mut degenerate,
        )
    };
    assert_eq!(status, GrsvStatus::Ok);
    assert_eq!(label, 2);
    assert_eq!(degenerate, 0);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let zero = [0.0; 3];
    let status = unsafe {
        grsv_subspace_predict(
            set,
            zero.as_ptr(),
            3,
            1e-6,
            &mut label,
            ptr::null_mut(),
            0,
            &mut degenerate,
        )
    };
    assert_eq!(status, GrsvStatus::Ok);
    assert_eq!((label, degenerate), (1, 1));
    unsafe {
        grsv_subspace_free(set);
        grsv_matrix_free(m);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let mut m = ptr::null_mut();
    let data = [1.0, 2.0];
    let status = unsafe { grsv_matrix_new(2, 2, ptr::null(), &mut m) };
    assert_eq!(status, GrsvStatus::NullPointer);
    assert!(last_error().contains("data"));
    let nan = [f64::NAN, 1.0];
    assert_eq!(
        unsafe { grsv_matrix_new(1, 2, nan.as_ptr(), &mut m) },
        GrsvStatus::Numerical
    );

    let a = matrix(1, 2, &data);
    let mut out = [0.0; 3];
    assert_eq!(
        unsafe { grsv_matrix_copy(a, out.as_mut_ptr(), 3) },
        GrsvStatus::Dimension
    );
    let labels = [1usize];
    let mut v = 0.0;
    assert_eq!(
        unsafe { grsv_ole_loss(a, labels.as_ptr(), 1, 1e-6, &mut v, ptr::null_mut()) },
        GrsvStatus::Dimension
    );
    let mut norm = 0.0;
    assert_eq!(
        unsafe { grsv_nuclear_norm(ptr::null(), &mut norm) },
        GrsvStatus::NullPointer
    );
    unsafe { grsv_matrix_free(a) };
    // freeing null is a no-op
    unsafe {
        grsv_matrix_free(ptr::null_mut());
        grsv_subspace_free(ptr::null_mut());
        grsv_config_free(ptr::null_mut());
        grsv_run_free(ptr::null_mut());
    }
}

const SMALL_RUN: &str = r#"
mode = "ole_grsvnet"
hidden_dims = [16]
epochs = 3
batch_size = 30
seed = 5

[dataset]
kind = "subspace_gaussian"
classes = 3
per_class = 30
dim = 10
label_mode = "true"
seed = 5
test_fraction = 0.2
"#;

#[test]
fn config_and_run() {
    let text = CString::new(SMALL_RUN).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { grsv_config_from_toml(text.as_ptr(), &mut cfg) },
        GrsvStatus::Ok
    );
    assert_eq!(
        unsafe { grsv_config_set_epochs(cfg, 0) },
        GrsvStatus::Config
    );
    assert_eq!(unsafe { grsv_config_set_epochs(cfg, 2) }, GrsvStatus::Ok);

    let mut run = ptr::null_mut();
    assert_eq!(
        unsafe { grsv_run_experiment(cfg, &mut run) },
        GrsvStatus::Ok
    );
    assert_eq!(unsafe { grsv_run_epochs(run) }, 2);
    let (mut train, mut test) = (f64::NAN, f64::NAN);
    assert_eq!(
        unsafe { grsv_run_final_accuracy(run, &mut train, &mut test) },
        GrsvStatus::Ok
    );
    assert!((0.0..=1.0).contains(&train) && (0.0..=1.0).contains(&test));

    let mut set = ptr::null_mut();
    assert_eq!(unsafe { grsv_run_subspaces(run, &mut set) }, GrsvStatus::Ok);
    assert_eq!(unsafe { grsv_subspace_classes(set) }, 3);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.csv").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { grsv_run_write_metrics(run, path.as_ptr()) },
        GrsvStatus::Ok
    );
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    unsafe {
        grsv_subspace_free(set);
        grsv_run_free(run);
        grsv_config_free(cfg);
    }
}

#[test]
fn bad_config_reports_message() {
    let text = CString::new("mode = \"vgg\"").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { grsv_config_from_toml(text.as_ptr(), &mut cfg) },
        GrsvStatus::Config
    );
    assert!(cfg.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/grsvnet.h")).unwrap();
    let source =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 20);
    for name in exports {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    for handle in ["GrsvMatrix", "GrsvSubspaceSet", "GrsvConfig", "GrsvRun"] {
        assert!(header.contains(&format!("typedef struct {handle} {handle};")));
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"grsvnet.h\"\nint main(void) { GrsvMatrix *m = 0; double x = 0; \
         return grsv_nuclear_norm(m, &x) == GRSV_STATUS_NULL_POINTER ? 0 : 1; }\n",
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| {
            std::process::Command::new(c)
                .arg("--version")
                .output()
                .is_ok()
        })
        .ok_or(())
}
