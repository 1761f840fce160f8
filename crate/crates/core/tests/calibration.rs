//! Boundary taxonomy of the shipped catalogs under the default NPU and the
//! tuned schedule. The traced reference runs anchor AlexNet at 3 easy of 4,
//! VGG11 at 5 of 6 and VGG16 at 8 of 11.

use npuscope_core::{label_boundaries, load_model, shipped_models, tune, BoundaryClass, NpuConfig};

fn easy_all(name: &str) -> (usize, usize) {
    let model = load_model(name).unwrap();
    let npu = NpuConfig::default();
    let schedule = tune(&model, &npu).unwrap();
    let labels = label_boundaries(&model, &schedule).unwrap();
    let easy = labels.iter().filter(|l| l.class.is_easy()).count();
    (easy, labels.len())
}

#[test]
fn shipped_boundary_taxonomy_summary() {
    let npu = NpuConfig::default();
    for name in shipped_models() {
        let model = load_model(name).unwrap();
        let schedule = tune(&model, &npu).unwrap();
        let labels = label_boundaries(&model, &schedule).unwrap();
        let mut t = [0usize; 3];
        for l in &labels {
            t[match l.class {
                BoundaryClass::T1DiffTileSize => 0,
                BoundaryClass::T2SameSizeDiffCount => 1,
                BoundaryClass::T3Identical => 2,
            }] += 1;
        }
        println!(
            "{name:10} boundaries={:2} T1={:2} T2={:2} T3={:2} cycles={} ",
            labels.len(),
            t[0],
            t[1],
            t[2],
            schedule.total_cycles
        );
        for (&id, cfg) in &schedule.per_layer {
            let layer = model.layer(id);
            let (n, b) = npuscope_core::tiles_for(layer, cfg).unwrap();
            println!(
                "    layer {id:3} {:12} tiles={n:3} bytes/tile={b:8} cfg={cfg}",
                format!("{}x{}x{}x{}", layer.out_channels, layer.in_channels, layer.kernel_h, layer.kernel_w),
            );
        }
    }
}

#[test]
fn alexnet_easy_boundaries() {
    assert_eq!(easy_all("alexnet"), (3, 4));
}

#[test]
fn vgg11_easy_boundaries() {
    assert_eq!(easy_all("vgg11"), (5, 6));
}

#[test]
fn vgg16_easy_boundaries() {
    assert_eq!(easy_all("vgg16"), (8, 11));
}
