//! Detection probability against incidence angle for the built-in materials,
//! next to the rate measured by casting beams at a wall.

use nalgebra::{Point3, Vector3};
use sonarslam::geometry::Pose;
use sonarslam::sim::{cast_scan, detection_probability, Environment, Material, NoiseConfig, Shape, SonarSpec};

fn measured_rate(material: Material, incidence_deg: f64) -> f64 {
    let mut env = Environment::default();
    env.push(
        Shape::Box {
            min: Point3::new(5.0, -50.0, -50.0),
            max: Point3::new(6.0, 50.0, 50.0),
        },
        material,
    );
    let spec = SonarSpec {
        h_fov: 3.0,
        v_fov: 12.0,
        ..SonarSpec::default()
    };
    let (nh, nv) = spec.grid_size();
    let pose = Pose::from_rpy(Vector3::zeros(), 0.0, 0.0, incidence_deg.to_radians());
    let noise = NoiseConfig::default();
    let scans = 200;
    let hits: usize = (0..scans)
        .map(|k| cast_scan(&env, &pose, &spec, &noise.for_scan(k)).cloud.len())
        .sum();
    hits as f64 / (nh * nv * scans as usize) as f64
}

fn main() {
    let dropout = NoiseConfig::default().dropout_base;
    let materials = [("rock", Material::ROCK), ("concrete", Material::CONCRETE), ("steel", Material::STEEL), ("pvc", Material::PVC)];
    println!("{:<9} {:>5}  {:>8}  {:>8}", "material", "deg", "model", "measured");
    for (name, m) in materials {
        for deg in [0.0f64, 20.0, 40.0, 60.0] {
            let p = detection_probability(&m, deg.to_radians().cos(), dropout);
            println!("{name:<9} {deg:>5.0}  {p:>8.3}  {:>8.3}", measured_rate(m, deg));
        }
    }
}
