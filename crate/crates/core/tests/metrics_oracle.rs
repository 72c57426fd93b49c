mod support;

use cyclostereo::metrics::{evaluate, Psnr};
use support::metrics_oracle::reference;
use support::{random_pair, to_grid};

#[test]
fn library_matches_reference_on_random_maps() {
    for seed in 0..20 {
        for (w, h) in [(8, 8), (5, 5)] {
            let (est, gt) = random_pair(seed, w, h);
            let lib = evaluate(&est, &gt, 2.0).unwrap();
            let oracle = reference(&to_grid(&est), &to_grid(&gt), 2.0);
            assert_eq!(lib.evaluated_pixels, oracle.count);
            assert!((lib.avg_error - oracle.avg).abs() < 1e-6);
            assert!((lib.bad_error - oracle.bad).abs() < 1e-6);
            assert!((lib.rms_error - oracle.rms).abs() < 1e-6);
            assert!((lib.ssim_error.unwrap() - oracle.ssim_error.unwrap()).abs() < 1e-6);
            match lib.psnr_sim {
                Psnr::Finite(v) => assert!((v - oracle.psnr.unwrap()).abs() < 1e-6),
                other => panic!("seed {seed}: {other:?}"),
            }
            assert!((lib.mutual_info_sim - oracle.mi).abs() < 1e-6, "seed {seed}");
        }
    }
}
