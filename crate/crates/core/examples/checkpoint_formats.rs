//! Writes a BSG1 image, a BSG1 mask and a BSCK checkpoint, reads them back
//! and shows that every roundtrip is bit-exact.

use bifurcated_seg::data::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, read_bsg1, save_checkpoint, write_bsg1, Bsg1Array,
};
use bifurcated_seg::nn::{BifurcatedModel, ModelConfig};
use bifurcated_seg::{Shape, Tensor};

fn main() {
    let dir = std::env::temp_dir().join(format!("bifseg-formats-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();

    let image = Tensor::from_fn(Shape::new(1, 1, 4, 5).unwrap(), |[_, _, y, x]| (y * 5 + x) as f32 / 19.0);
    let mask = image.map(|v| if v > 0.5 { 1.0 } else { 0.0 });
    for (name, arr) in [("image.bsg1", Bsg1Array::from_tensor(&image)), ("mask.bsg1", Bsg1Array::from_mask(&mask).unwrap())] {
        let path = dir.join(name);
        write_bsg1(&path, &arr).unwrap();
        let back = read_bsg1(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        println!("{name:<11} dims {:?} dtype {} {:>4} bytes, roundtrip equal: {}", back.dims, back.data.dtype(), bytes.len(), back == arr);
    }

    let cfg = ModelConfig { levels: 2, base_channels: 4, fcn_channels: 4, input_size: (16, 16), ..ModelConfig::default() };
    let model = BifurcatedModel::new(cfg, 5).unwrap();
    let path = dir.join("model.bsck");
    save_checkpoint(&path, &model.params).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    let bitwise = model.params.iter().zip(loaded.iter()).all(|((a, x), (b, y))| a == b && x.bitwise_eq(y));
    let bytes = std::fs::read(&path).unwrap();
    let reencoded = encode_checkpoint(&decode_checkpoint(&bytes).unwrap()).unwrap() == bytes;
    println!("model.bsck  {} tensors, {} bytes, parameters bitwise equal: {bitwise}, re-encoding identical: {reencoded}", loaded.len(), bytes.len());
    std::fs::remove_dir_all(&dir).unwrap();
}
