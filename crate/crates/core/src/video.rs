use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One video laid out `[frames, channels, height, width]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    shape: [usize; 4],
    data: Vec<f64>,
}

/// Frame geometry without the pixel data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoShape {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl VideoShape {
    pub fn dims(&self) -> [usize; 4] {
        [self.frames, self.channels, self.height, self.width]
    }

    pub fn frame_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.frames * self.frame_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Video {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Video> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::shape("video", format!("shape {shape:?} vs {} values", data.len())));
        }
        Ok(Video { shape, data })
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Video {
        Video { shape, data: vec![value; shape.iter().product()] }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Video> {
        match *t.shape() {
            [f, c, h, w] => Video::new([f, c, h, w], t.to_vec()),
            ref s => Err(Error::shape("video", format!("expected [T, C, H, W], got {s:?}"))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape.to_vec(), self.data.clone()).expect("consistent video")
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn geometry(&self) -> VideoShape {
        let [frames, channels, height, width] = self.shape;
        VideoShape { frames, channels, height, width }
    }

    pub fn frames(&self) -> usize {
        self.shape[0]
    }

    pub fn frame_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn frame_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.frame_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn clamp_unit(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }
}

/// Stacks equally shaped videos into a `[B, T, C, H, W]` tensor.
pub fn stack<'a>(videos: impl IntoIterator<Item = &'a Video>) -> Result<Tensor> {
    let mut shape: Option<[usize; 4]> = None;
    let mut data = Vec::new();
    let mut count = 0;
    for v in videos {
        match shape {
            None => shape = Some(v.shape()),
            Some(s) if s != v.shape() => {
                return Err(Error::shape("stack", format!("{s:?} vs {:?}", v.shape())));
            }
            _ => {}
        }
        data.extend_from_slice(v.data());
        count += 1;
    }
    let s = shape.ok_or_else(|| Error::shape("stack", "no videos"))?;
    Tensor::new(vec![count, s[0], s[1], s[2], s[3]], data)
}
