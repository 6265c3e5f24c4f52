use fracstab::heatmap::{
    argmax_peak, decode_stack, fractional_peak, read_stack, render_heatmaps, write_stack, DecodeMode, GridSpec,
    Heatmap, RenderMode,
};
use fracstab::{Error, LandmarkSet};
use proptest::prelude::*;

proptest! {
    #[test]
    fn fhr_recovers_fractional_centers(
        cx in 0.0f64..47.0,
        cy in 0.0f64..47.0,
        sigma in prop::sample::select(vec![1.0, 2.0, 3.0, 5.0]),
    ) {
        let h = Heatmap::gaussian(48, 48, [cx, cy], sigma);
        let p = fractional_peak(&h, sigma).unwrap();
        prop_assert!((p.x - cx).abs() < 1e-9 && (p.y - cy).abs() < 1e-9, "{:?} vs ({cx}, {cy})", p);
    }

    #[test]
    fn chr_error_bounded_by_half_scale(
        cx in 1.0f64..30.0,
        cy in 1.0f64..30.0,
        scale in prop::sample::select(vec![1.0, 2.0, 4.0, 8.0]),
    ) {
        let grid = GridSpec::new(32, 32, scale, 2.0).unwrap();
        let lm = LandmarkSet::from_points(&[[cx * scale, cy * scale]]).unwrap();
        let stack = render_heatmaps(&lm, &grid, RenderMode::Fractional).unwrap();
        let chr = decode_stack(&stack, DecodeMode::Chr).unwrap().point(0);
        prop_assert!((chr[0] - cx * scale).abs() <= 0.5 * scale + 1e-9);
        prop_assert!((chr[1] - cy * scale).abs() <= 0.5 * scale + 1e-9);
        prop_assert_eq!(chr[0] % scale, 0.0);
    }

    #[test]
    fn rounded_render_decodes_to_grid_node(cx in 0.0f64..31.0, cy in 0.0f64..31.0) {
        let grid = GridSpec::new(32, 32, 4.0, 2.0).unwrap();
        let lm = LandmarkSet::from_points(&[[cx * 4.0, cy * 4.0]]).unwrap();
        let stack = render_heatmaps(&lm, &grid, RenderMode::Rounded).unwrap();
        let fhr = decode_stack(&stack, DecodeMode::Fhr).unwrap().point(0);
        prop_assert!((fhr[0] - cx.round() * 4.0).abs() < 1e-6);
        prop_assert!((fhr[1] - cy.round() * 4.0).abs() < 1e-6);
    }

    #[test]
    fn container_round_trip(cx in 0.0f64..15.0, cy in 0.0f64..11.0) {
        let grid = GridSpec::new(16, 12, 2.0, 1.5).unwrap();
        let lm = LandmarkSet::from_points(&[[cx * 2.0, cy * 2.0], [3.0, 4.0]]).unwrap();
        let stack = render_heatmaps(&lm, &grid, RenderMode::Fractional).unwrap();
        let mut bytes = Vec::new();
        write_stack(&mut bytes, &stack).unwrap();
        prop_assert_eq!(read_stack(bytes.as_slice()).unwrap(), stack);
    }
}

#[test]
fn chr_rmse_follows_quantization_law() {
    let n = 40;
    for scale in [1.0, 4.0] {
        let grid = GridSpec::new(48, 48, scale, 2.0).unwrap();
        let mut sq = 0.0;
        for i in 0..n {
            for j in 0..n {
                let c = [(10.0 + (i as f64 + 0.5) / n as f64) * scale, (20.0 + (j as f64 + 0.5) / n as f64) * scale];
                let lm = LandmarkSet::from_points(&[c]).unwrap();
                let stack = render_heatmaps(&lm, &grid, RenderMode::Fractional).unwrap();
                let p = decode_stack(&stack, DecodeMode::Chr).unwrap().point(0);
                sq += (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
            }
        }
        let rmse = (sq / (2 * n * n) as f64).sqrt();
        assert!((rmse / scale - 12f64.sqrt().recip()).abs() < 2e-3, "{rmse}");
    }
}

#[test]
fn argmax_tie_prefers_first_row_major() {
    let h = Heatmap::new(3, 2, vec![0.0, 1.0, 0.5, 1.0, 0.0, 1.0]).unwrap();
    assert_eq!(argmax_peak(&h).unwrap(), (1, 0));
}

#[test]
fn out_of_grid_landmark_rejected() {
    let grid = GridSpec::new(8, 8, 4.0, 1.0).unwrap();
    let lm = LandmarkSet::from_points(&[[4.0, 4.0], [40.0, 4.0]]).unwrap();
    match render_heatmaps(&lm, &grid, RenderMode::Fractional) {
        Err(Error::OutOfDomain { index, .. }) => assert_eq!(index, 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn truncated_container_reports_offset() {
    let grid = GridSpec::new(4, 4, 1.0, 1.0).unwrap();
    let lm = LandmarkSet::from_points(&[[1.0, 1.0]]).unwrap();
    let mut bytes = Vec::new();
    write_stack(&mut bytes, &render_heatmaps(&lm, &grid, RenderMode::Fractional).unwrap()).unwrap();
    bytes.truncate(40);
    assert!(matches!(read_stack(bytes.as_slice()), Err(Error::Format { .. })));
}
