use std::ffi::CString;
use std::ptr;

use nc_forge_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0u8; 256];
    let n = unsafe { ncf_last_error_message(buf.as_mut_ptr().cast(), buf.len()) };
    buf.truncate(n.min(255));
    String::from_utf8(buf).unwrap()
}

fn long_tail_set() -> *mut NcfDataset {
    let mut full = ptr::null_mut();
    let mut lt = ptr::null_mut();
    unsafe {
        assert_eq!(
            ncf_dataset_gaussian(4, 6, 120, 4.0, 1.0, 3, &mut full),
            NcfStatus::Ok
        );
        assert_eq!(ncf_dataset_long_tail(full, 10.0, 3, &mut lt), NcfStatus::Ok);
        ncf_dataset_free(full);
    }
    lt
}

#[test]
fn dataset_handles() {
    let lt = long_tail_set();
    unsafe {
        assert_eq!(ncf_dataset_num_classes(lt), 4);
        assert_eq!(ncf_dataset_dim(lt), 6);
        let mut counts = [0usize; 4];
        assert_eq!(
            ncf_dataset_class_counts(lt, counts.as_mut_ptr(), 4),
            NcfStatus::Ok
        );
        assert_eq!(counts[0], 120);
        assert_eq!(counts[3], 12);
        assert_eq!(counts.iter().sum::<usize>(), ncf_dataset_len(lt));
        assert_eq!(
            ncf_dataset_class_counts(lt, counts.as_mut_ptr(), 3),
            NcfStatus::ShapeError
        );
        assert!(last_error().starts_with("ShapeError"));
        ncf_dataset_free(lt);
        assert_eq!(ncf_dataset_len(ptr::null()), 0);
        ncf_dataset_free(ptr::null_mut());
    }
}

#[test]
fn train_evaluate_report_save_load() {
    let lt = long_tail_set();
    let mut opts = ncf_train_options_default();
    assert_eq!(
        (
            opts.epochs,
            opts.hidden_layers,
            opts.hidden_width,
            opts.feature_dim
        ),
        (60, 2, 64, 64)
    );
    opts.epochs = 8;
    opts.hidden_layers = 1;
    opts.hidden_width = 16;
    opts.feature_dim = 8;
    opts.lambda1 = 0.001;
    opts.lambda2 = 0.3;
    opts.drw_epoch = 6;
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(
            ncf_train(lt, &opts, &mut model),
            NcfStatus::Ok,
            "{}",
            last_error()
        );
        assert_eq!(ncf_model_epochs(model), 8);
        let mut acc = 0.0;
        assert_eq!(ncf_evaluate(model, lt, &mut acc), NcfStatus::Ok);
        assert!(acc > 0.8, "{acc}");
        let mut rep = NcfNcReport::default();
        assert_eq!(ncf_nc_report(model, lt, &mut rep), NcfStatus::Ok);
        assert!(rep.nc1.is_finite() && rep.nc3_align.is_finite());
        assert!(rep.nc4_agree > 0.5 && rep.nc4_agree <= 1.0);

        let n = ncf_dataset_len(lt);
        let x: Vec<f64> = (0..n * 6).map(|i| (i % 7) as f64 * 0.3).collect();
        let mut a = vec![0u32; n];
        assert_eq!(
            ncf_predict(model, x.as_ptr(), n, 6, a.as_mut_ptr()),
            NcfStatus::Ok
        );
        assert!(a.iter().all(|&c| c < 4));
        assert_eq!(
            ncf_predict(model, x.as_ptr(), n, 5, a.as_mut_ptr()),
            NcfStatus::ShapeError
        );

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.bin").to_str().unwrap()).unwrap();
        assert_eq!(ncf_model_save(model, path.as_ptr()), NcfStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(ncf_model_load(path.as_ptr(), &mut loaded), NcfStatus::Ok);
        let mut b = vec![0u32; n];
        assert_eq!(
            ncf_predict(loaded, x.as_ptr(), n, 6, b.as_mut_ptr()),
            NcfStatus::Ok
        );
        assert_eq!(a, b);

        let mut again = ptr::null_mut();
        assert_eq!(ncf_train(lt, &opts, &mut again), NcfStatus::Ok);
        let mut c = vec![0u32; n];
        ncf_predict(again, x.as_ptr(), n, 6, c.as_mut_ptr());
        assert_eq!(a, c);

        ncf_model_free(model);
        ncf_model_free(loaded);
        ncf_model_free(again);
        ncf_dataset_free(lt);
    }
}

#[test]
fn geometry_entry_points() {
    // Three unit vectors at 120 degrees: a planar simplex frame.
    let s = 3f64.sqrt() / 2.0;
    let m = [1.0, -0.5, -0.5, 0.0, s, -s];
    let mut check = NcfEtfCheck::default();
    unsafe {
        assert_eq!(
            ncf_is_simplex_etf(m.as_ptr(), 2, 3, 1e-8, &mut check),
            NcfStatus::Ok
        );
        assert!(check.verdict && check.residual <= 1e-12);
        assert!((check.alpha - 1.0).abs() < 1e-12);
        let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(
            ncf_is_simplex_etf(eye.as_ptr(), 3, 3, 1e-8, &mut check),
            NcfStatus::Ok
        );
        assert!(!check.verdict);
        assert_eq!(
            ncf_is_simplex_etf(eye.as_ptr(), 1, 3, 1e-8, &mut check),
            NcfStatus::SpecError
        );

        let rows = [1.0, 0.0, -0.5, s, -0.5, -s];
        let mut lb = 0.0;
        assert_eq!(
            ncf_between_class_reg(rows.as_ptr(), 3, 2, &mut lb),
            NcfStatus::Ok
        );
        assert!((lb + 2.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);

        let h = [0.0, 0.0, 2.0, 0.0];
        let y = [0u32, 0];
        let mut lw = 0.0;
        assert_eq!(
            ncf_within_class_reg(h.as_ptr(), y.as_ptr(), 2, 2, &mut lw),
            NcfStatus::Ok
        );
        assert!((lw - 1.0).abs() < 1e-15);
    }
}

#[test]
fn null_and_bad_arguments() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(
            ncf_dataset_gaussian(3, 4, 10, 2.0, 1.0, 0, ptr::null_mut()),
            NcfStatus::NullPointer
        );
        assert!(last_error().starts_with("NullPointer"));
        assert_eq!(
            ncf_dataset_gaussian(1, 4, 10, 2.0, 1.0, 0, &mut ds),
            NcfStatus::InvalidInput
        );
        assert!(ds.is_null());
        let mut acc = 0.0;
        assert_eq!(
            ncf_evaluate(ptr::null(), ptr::null(), &mut acc),
            NcfStatus::NullPointer
        );
        let missing = CString::new("/nonexistent/x.idx").unwrap();
        assert_eq!(
            ncf_dataset_load_idx(missing.as_ptr(), missing.as_ptr(), &mut ds),
            NcfStatus::IoError
        );
        let mut model = ptr::null_mut();
        assert_eq!(
            ncf_model_load(missing.as_ptr(), &mut model),
            NcfStatus::IoError
        );

        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0u32, 5];
        assert_eq!(
            ncf_dataset_from_arrays(x.as_ptr(), y.as_ptr(), 2, 2, 2, &mut ds),
            NcfStatus::InvalidInput
        );
        let y = [0u32, 1];
        assert_eq!(
            ncf_dataset_from_arrays(x.as_ptr(), y.as_ptr(), 2, 2, 2, &mut ds),
            NcfStatus::Ok
        );
        assert_eq!(last_error(), "");
        let mut opts = ncf_train_options_default();
        opts.momentum = 2.0;
        assert_eq!(ncf_train(ds, &opts, &mut model), NcfStatus::ConfigError);
        ncf_dataset_free(ds);
        let v = std::ffi::CStr::from_ptr(ncf_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}
