//! Novel views synthesized from recorded frames versus views rendered
//! directly from the synthetic world at the displaced pose.

use vista_core::camera::DepthProvider;
use vista_core::cloud::decode_cloud;
use vista_core::geometry::relative_transform;
use vista_core::lidar::{estimate_ray_prior, project_polar, synthesize_lidar_view, CullParams, PriorOptions};
use vista_core::rgb::{warp_novel_view, RgbFrame};
use vista_core::synthetic::{render_lidar, render_rgb, SyntheticTrace};
use vista_core::trace::SensorKind;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn lidar_lateral_shift_matches_direct_render() {
    let mut spec = SyntheticTrace::straight(120.0);
    spec.rgb = None;
    spec.lidar.as_mut().unwrap().rate = 1.0;
    let trace = spec.build().unwrap();
    let poles = spec.poles(&trace);
    let setup = spec.lidar.unwrap();
    let sensor = trace.sensor(SensorKind::Lidar).unwrap();
    let stream = trace.stream(SensorKind::Lidar).unwrap();
    let prior = estimate_ray_prior(&trace, &PriorOptions { record_drop: false, ..Default::default() }).unwrap();

    let k = 4;
    let pose = stream.frame_pose(k);
    let novel = pose.compose(0.0, 1.0, 0.0);
    let source = decode_cloud(stream.payload(k)).unwrap();
    let t = relative_transform(&novel, &pose, &sensor.extrinsic);
    let synth = synthesize_lidar_view(&source, &t, &prior, &CullParams::default(), 0).unwrap();

    let oracle = project_polar(&render_lidar(&setup, &novel, &poles), &prior.grid).unwrap();
    let got = project_polar(&synth, &prior.grid).unwrap();
    let mut errs = Vec::new();
    for c in 0..oracle.valid.len() {
        if oracle.valid[c] && got.valid[c] {
            errs.push((oracle.depth[c] - got.depth[c]).abs());
        }
    }
    assert!(errs.len() > oracle.valid_count() / 2, "{} of {} cells compared", errs.len(), oracle.valid_count());
    let m = median(errs);
    assert!(m < 0.2, "median range error {m}");
}

#[test]
fn rgb_lateral_shift_matches_direct_render_on_the_ground() {
    let mut spec = SyntheticTrace::straight(120.0);
    spec.lidar = None;
    spec.pole_spacing = 1e4;
    spec.rgb.as_mut().unwrap().rate = 1.0;
    let trace = spec.build().unwrap();
    let setup = spec.rgb.unwrap();
    let cam = setup.camera;
    let sensor = trace.sensor(SensorKind::Rgb).unwrap();
    let stream = trace.stream(SensorKind::Rgb).unwrap();

    let k = 3;
    let pose = stream.frame_pose(k);
    let novel = pose.compose(0.5, 0.4, 0.02);
    let frame = RgbFrame::new(128, 96, stream.payload(k).to_vec(), 0.0).unwrap();
    let t = relative_transform(&novel, &pose, &sensor.extrinsic);
    let depth = DepthProvider::ground(sensor.mount_height(), 80.0);
    let warped = warp_novel_view(&frame, &depth, &cam, &t).unwrap();
    let direct = render_rgb(&setup, &novel, &[]);

    // Rows well below the horizon, where the ground proxy is exact.
    let mut errs = Vec::new();
    for v in (cam.cy as usize + 12)..96 {
        for u in 0..128 {
            let i = v * 128 + u;
            if warped.valid[i] {
                errs.push((warped.frame.data[3 * i] as f64 - direct[3 * i] as f64).abs());
            }
        }
    }
    assert!(errs.len() > 3000);
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    assert!(mean < 4.0, "mean abs error {mean}");
}
