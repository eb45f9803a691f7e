//! The sequential and parallel paths must agree bit for bit, and a given
//! seed must always produce the same recording.

use depthmetric::errorfield::{signed_error_frame_with, DistanceMode, ReferenceSurface};
use depthmetric::exec::Exec;
#[cfg(feature = "parallel")]
use depthmetric::pipeline::{evaluate, EvaluateOptions, FrameRegistration};
use depthmetric::sensorsim::{
    generate_scene, render_pin_observations, Intrinsics, NoiseModel, PinholeCamera, Renderer, SceneSpec, SurfaceKind,
    ViewCondition,
};

fn setup() -> (depthmetric::sensorsim::Scene, PinholeCamera, NoiseModel) {
    let spec =
        SceneSpec { surface: SurfaceKind::Bumps { count: 4, amplitude: 0.003, width: 0.01 }, ..SceneSpec::planar() };
    let scene = generate_scene(&spec, 21).unwrap();
    let intr = Intrinsics { width: 160, height: 90, fx: 350.0, fy: 350.0, cx: None, cy: None };
    let camera = PinholeCamera::new(intr, ViewCondition::close().camera_pose().unwrap()).unwrap();
    let noise = NoiseModel { sigma: 0.0004, pin_sigma: 0.0002, ..NoiseModel::default() };
    (scene, camera, noise)
}

#[test]
fn same_seed_same_frames() {
    let (scene, camera, noise) = setup();
    let a = Renderer::new(&scene, camera, &noise, 5).unwrap();
    let b = Renderer::new(&scene, camera, &noise, 5).unwrap();
    let c = Renderer::new(&scene, camera, &noise, 6).unwrap();
    assert_eq!(a.frame(3, 0.1), b.frame(3, 0.1));
    assert_ne!(a.frame(3, 0.1), c.frame(3, 0.1));
    assert_ne!(a.frame(3, 0.1), a.frame(4, 0.1));
    let pa = render_pin_observations(&scene, &camera, &noise, 5).unwrap();
    let pb = render_pin_observations(&scene, &camera, &noise, 5).unwrap();
    assert_eq!(pa, pb);
}

#[cfg(feature = "parallel")]
#[test]
fn sequential_and_parallel_agree() {
    let (scene, camera, noise) = setup();
    let seq = Renderer::with_exec(Exec::Sequential, &scene, camera, &noise, 5).unwrap();
    let par = Renderer::with_exec(Exec::Parallel, &scene, camera, &noise, 5).unwrap();
    assert_eq!(seq.rays(), par.rays());

    let surface = ReferenceSurface::new(scene.mesh().clone());
    let frame = seq.frame(0, 0.0);
    for mode in [DistanceMode::NearestVertices, DistanceMode::ExactFace] {
        let a = signed_error_frame_with(Exec::Sequential, &frame, camera.pose(), &surface, mode);
        let b = signed_error_frame_with(Exec::Parallel, &frame, camera.pose(), &surface, mode);
        assert_eq!(a, b);
    }

    let reg = FrameRegistration::Fixed(*camera.pose());
    let run = |exec| {
        let frames = (0..5u64).map(|f| Ok(seq.frame(f, f as f64 / 30.0)));
        evaluate(&surface, frames, &reg, &EvaluateOptions { exec, ..Default::default() }).unwrap()
    };
    let (a, b) = (run(Exec::Sequential), run(Exec::Parallel));
    assert_eq!(a.pooled, b.pooled);
    assert_eq!(a.fields, b.fields);
}

#[test]
fn exact_face_agrees_with_vertex_plane_on_a_flat_surface() {
    let scene = generate_scene(&SceneSpec::planar(), 2).unwrap();
    let (_, camera, _) = setup();
    let r = Renderer::new(&scene, camera, &NoiseModel::noiseless(), 1).unwrap();
    let surface = ReferenceSurface::new(scene.mesh().clone());
    let frame = r.frame(0, 0.0);
    let a = signed_error_frame_with(Exec::default(), &frame, camera.pose(), &surface, DistanceMode::NearestVertices);
    let b = signed_error_frame_with(Exec::default(), &frame, camera.pose(), &surface, DistanceMode::ExactFace);
    for (x, y) in a.samples().iter().zip(b.samples()) {
        if let (Some(x), Some(y)) = (x, y) {
            assert!((x.error - y.error).abs() < 1e-12);
        }
    }
}
