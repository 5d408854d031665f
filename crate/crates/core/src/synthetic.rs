//! Piecewise-constant test scenes with known ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::metrics::LabelMap;
use crate::pipeline::MultiChannelImage;

/// A region in pixel coordinates, `(row, col)` with pixel centers at integers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "shape")]
pub enum Shape {
    Disk { center: (f64, f64), radius: f64 },
    /// Half-open `[top, top + height) x [left, left + width)`.
    Rect { top: f64, left: f64, height: f64, width: f64 },
    Triangle { vertices: [(f64, f64); 3] },
}

impl Shape {
    pub fn contains(&self, i: f64, j: f64) -> bool {
        match *self {
            Shape::Disk { center, radius } => {
                let (di, dj) = (i - center.0, j - center.1);
                di * di + dj * dj <= radius * radius
            }
            Shape::Rect { top, left, height, width } => {
                i >= top && i < top + height && j >= left && j < left + width
            }
            Shape::Triangle { vertices: [a, b, c] } => {
                let edge = |p: (f64, f64), q: (f64, f64)| (q.0 - p.0) * (j - p.1) - (q.1 - p.1) * (i - p.0);
                let (e0, e1, e2) = (edge(a, b), edge(b, c), edge(c, a));
                (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub shape: Shape,
    /// One value for grayscale, three for RGB.
    pub value: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub rows: usize,
    pub cols: usize,
    pub background: Vec<f64>,
    pub regions: Vec<Region>,
}

impl Scene {
    /// Renders the image and its labels: background is label 1, region `r`
    /// is label `r + 2`. Overlapping regions and regions that cover no pixel
    /// are rejected.
    pub fn render(&self) -> Result<(MultiChannelImage, LabelMap)> {
        let (m, n) = (self.rows, self.cols);
        if m == 0 || n == 0 {
            return Err(Error::EmptyGrid { rows: m, cols: n });
        }
        let d = self.background.len();
        if d != 1 && d != 3 {
            return Err(Error::InvalidScene(format!("values need 1 or 3 channels, got {d}")));
        }
        if let Some(r) = self.regions.iter().position(|r| r.value.len() != d) {
            return Err(Error::InvalidScene(format!(
                "region {} has {} channels, background has {d}",
                r + 1,
                self.regions[r].value.len()
            )));
        }
        let mut labels = vec![1u32; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut owner: Option<usize> = None;
                for (r, region) in self.regions.iter().enumerate() {
                    if region.shape.contains(i as f64, j as f64) {
                        if let Some(prev) = owner {
                            return Err(Error::InvalidScene(format!(
                                "regions {} and {} overlap at pixel ({i}, {j})",
                                prev + 1,
                                r + 1
                            )));
                        }
                        owner = Some(r);
                    }
                }
                if let Some(r) = owner {
                    labels[i * n + j] = r as u32 + 2;
                }
            }
        }
        let covered = LabelMap::new(m, n, labels)
            .ok()
            .filter(|map| map.num_labels() == self.regions.len() + 1);
        let map = covered.ok_or_else(|| {
            Error::InvalidScene("every region and the background must cover at least one pixel".into())
        })?;
        let value = |l: u32| -> &[f64] {
            if l == 1 {
                &self.background
            } else {
                &self.regions[l as usize - 2].value
            }
        };
        let channels = (0..d)
            .map(|c| ImageGrid::new(m, n, map.as_slice().iter().map(|&l| value(l)[c]).collect()))
            .collect::<Result<Vec<_>>>()?;
        let image = if d == 1 {
            MultiChannelImage::gray(channels.into_iter().next().expect("one channel"))
        } else {
            let mut it = channels.into_iter();
            let (r, g, b) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
            MultiChannelImage::rgb(r, g, b)?
        };
        Ok((image, map))
    }
}

/// Centered disk of radius `size / 4` on a square background.
pub fn disk_scene(size: usize, background: f64, foreground: f64) -> Scene {
    let c = (size as f64 - 1.0) / 2.0;
    Scene {
        rows: size,
        cols: size,
        background: vec![background],
        regions: vec![Region {
            shape: Shape::Disk {
                center: (c, c),
                radius: size as f64 / 4.0,
            },
            value: vec![foreground],
        }],
    }
}

/// Three-region scene: background, a rectangle and a disk.
pub fn three_region_scene(size: usize, values: [f64; 3]) -> Scene {
    let s = size as f64;
    Scene {
        rows: size,
        cols: size,
        background: vec![values[0]],
        regions: vec![
            Region {
                shape: Shape::Rect {
                    top: 0.15 * s,
                    left: 0.1 * s,
                    height: 0.35 * s,
                    width: 0.4 * s,
                },
                value: vec![values[1]],
            },
            Region {
                shape: Shape::Disk {
                    center: (0.7 * s, 0.7 * s),
                    radius: 0.2 * s,
                },
                value: vec![values[2]],
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_has_two_labels() {
        let (img, labels) = disk_scene(32, 0.2, 0.8).render().unwrap();
        assert_eq!(labels.num_labels(), 2);
        assert_eq!(img.shape(), labels.shape());
        let center = labels.get(16, 16);
        assert_eq!(center, 2);
        assert_eq!(img.channel(0).get(16, 16), 0.8);
        assert_eq!(img.channel(0).get(0, 0), 0.2);
    }

    #[test]
    fn color_scene() {
        let mut scene = disk_scene(16, 0.0, 0.0);
        scene.background = vec![0.0, 0.0, 0.0];
        scene.regions[0].value = vec![128.0 / 255.0, 230.0 / 255.0, 64.0 / 255.0];
        let (img, _) = scene.render().unwrap();
        assert!(img.is_rgb());
        assert_eq!(img.channel(1).get(8, 8), 230.0 / 255.0);
    }

    #[test]
    fn overlap_rejected() {
        let mut scene = disk_scene(16, 0.0, 1.0);
        scene.regions.push(scene.regions[0].clone());
        assert!(matches!(scene.render(), Err(Error::InvalidScene(_))));
    }

    #[test]
    fn empty_region_rejected() {
        let mut scene = disk_scene(16, 0.0, 1.0);
        scene.regions[0].shape = Shape::Disk {
            center: (100.0, 100.0),
            radius: 1.0,
        };
        assert!(scene.render().is_err());
    }

    #[test]
    fn triangle_membership() {
        let t = Shape::Triangle {
            vertices: [(0.0, 0.0), (0.0, 4.0), (4.0, 0.0)],
        };
        assert!(t.contains(1.0, 1.0) && t.contains(0.0, 0.0) && t.contains(2.0, 2.0));
        assert!(!t.contains(3.0, 3.0) && !t.contains(-0.5, 1.0));
    }

    #[test]
    fn three_regions_render() {
        let (_, labels) = three_region_scene(48, [0.1, 0.5, 0.9]).render().unwrap();
        assert_eq!(labels.num_labels(), 3);
    }
}
