//! Procedural desk-scale iris data.
//!
//! Bona fide samples are concentric pupil/iris/sclera bands with a smooth
//! radial texture plus noise. Attacks reuse the bona fide base and add the
//! artifact that characterizes them: a high-frequency dot lattice on the iris
//! annulus (textured lens), a halftone grid with global blur (printout), or
//! moire banding with a specular rectangle (replay).

use std::f32::consts::PI;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{write_manifest, AttackType, Label, SampleRecord, Spectrum, Split};

/// Sample counts for one split.
#[derive(Debug, Clone, Copy, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ClassCounts {
    pub bona_fide: usize,
    pub textured_lens: usize,
    pub printout: usize,
    pub replay: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.bona_fide + self.textured_lens + self.printout + self.replay
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub image_size: usize,
    pub train: ClassCounts,
    pub test: ClassCounts,
    /// Distinct subjects per split; train and test subject pools never overlap.
    pub subjects_per_split: usize,
    pub spectrum: Spectrum,
    pub database: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            image_size: 112,
            train: ClassCounts::default(),
            test: ClassCounts::default(),
            subjects_per_split: 10,
            spectrum: Spectrum::Nir,
            database: "synth".into(),
        }
    }
}

/// Iris geometry of one generated image, in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub cx: f32,
    pub cy: f32,
    pub r_pupil: f32,
    pub r_iris: f32,
}

#[derive(Debug)]
pub struct SynthOutput {
    pub manifest_path: PathBuf,
    pub geometry_path: PathBuf,
    pub records: Vec<SampleRecord>,
    pub geometry: Vec<(String, Geometry)>,
}

struct SubjectParams {
    cx_frac: f32,
    cy_frac: f32,
    rp_frac: f32,
    ri_frac: f32,
    angular_freq: f32,
    phase: f32,
}

fn subject_params(rng: &mut ChaCha8Rng) -> SubjectParams {
    SubjectParams {
        cx_frac: rng.gen_range(0.47..0.53),
        cy_frac: rng.gen_range(0.47..0.53),
        rp_frac: rng.gen_range(0.13..0.18),
        ri_frac: rng.gen_range(0.38..0.46),
        angular_freq: rng.gen_range(8.0..16.0f32).round(),
        phase: rng.gen_range(0.0..2.0 * PI),
    }
}

fn smoothstep(edge0: f32, edge1: f32, x: f32) -> f32 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn render(
    size: usize,
    geo: Geometry,
    params: &SubjectParams,
    attack: AttackType,
    rng: &mut ChaCha8Rng,
) -> GrayImage {
    let s = size as f32;
    let jitter: f32 = rng.gen_range(-0.3..0.3);
    let mut values = vec![0f32; size * size];
    for y in 0..size {
        for x in 0..size {
            let dx = x as f32 - geo.cx;
            let dy = y as f32 - geo.cy;
            let r = (dx * dx + dy * dy).sqrt();
            let theta = dy.atan2(dx);

            let iris_tex = 120.0
                + 35.0 * (params.angular_freq * theta + params.phase + jitter).sin()
                + 25.0 * (2.0 * PI * (r - geo.r_pupil) / 6.0 + params.phase).sin();
            let pupil = 25.0;
            let sclera = 205.0;

            // blend bands over ~2px edges
            let w_pupil = 1.0 - smoothstep(geo.r_pupil - 1.0, geo.r_pupil + 1.0, r);
            let w_sclera = smoothstep(geo.r_iris - 1.0, geo.r_iris + 1.0, r);
            let w_iris = (1.0 - w_pupil) * (1.0 - w_sclera);
            let mut v = w_pupil * pupil + w_iris * iris_tex + w_sclera * sclera;

            match attack {
                AttackType::TexturedLens | AttackType::PrintLens => {
                    // dot lattice confined to the iris annulus
                    let lattice = (2.0 * PI * x as f32 / 4.0).sin()
                        * (2.0 * PI * y as f32 / 4.0).sin();
                    v += w_iris * 55.0 * lattice.signum();
                }
                AttackType::Replay => {
                    let moire =
                        (2.0 * PI * y as f32 / 7.0 + 2.0 * (2.0 * PI * x as f32 / 90.0).sin())
                            .sin();
                    v += 30.0 * moire;
                    // specular rectangle from the replay screen
                    if (0.60 * s..0.78 * s).contains(&(x as f32))
                        && (0.15 * s..0.30 * s).contains(&(y as f32))
                    {
                        v = 0.2 * v + 0.8 * 235.0;
                    }
                }
                AttackType::Printout | AttackType::None => {}
            }

            v += rng.gen_range(-10.0..10.0);
            values[y * size + x] = v;
        }
    }

    if attack == AttackType::Printout {
        // halftone grid, then a global 3x3 box blur from the recapture
        for y in 0..size {
            for x in 0..size {
                let cell = ((x / 3) + (y / 3)) % 2 == 0;
                values[y * size + x] += if cell { 35.0 } else { -35.0 };
            }
        }
        let src = values.clone();
        for y in 0..size {
            for x in 0..size {
                let mut sum = 0.0;
                let mut n = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let yy = y as i64 + dy;
                        let xx = x as i64 + dx;
                        if yy >= 0 && yy < size as i64 && xx >= 0 && xx < size as i64 {
                            sum += src[yy as usize * size + xx as usize];
                            n += 1.0;
                        }
                    }
                }
                values[y * size + x] = sum / n;
            }
        }
    }

    let mut img = GrayImage::new(size as u32, size as u32);
    for (i, v) in values.iter().enumerate() {
        img.put_pixel(
            (i % size) as u32,
            (i / size) as u32,
            Luma([v.clamp(0.0, 255.0) as u8]),
        );
    }
    img
}

/// Generates images, a manifest, and a geometry sidecar under `out_dir`.
/// The same seed always yields byte-identical files.
pub fn synthesize_dataset(
    spec: &SynthSpec,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<SynthOutput> {
    let out_dir = out_dir.as_ref();
    let image_dir = out_dir.join("images");
    std::fs::create_dir_all(&image_dir)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut geometry = Vec::new();

    for (split, counts, subj_prefix) in [
        (Split::Train, spec.train, "tr"),
        (Split::Test, spec.test, "te"),
    ] {
        let subjects: Vec<(String, SubjectParams)> = (0..spec.subjects_per_split)
            .map(|i| (format!("{subj_prefix}_s{i:02}"), subject_params(&mut rng)))
            .collect();

        for (attack, label, count, tag) in [
            (AttackType::None, Label::BonaFide, counts.bona_fide, "bf"),
            (
                AttackType::TexturedLens,
                Label::Attack,
                counts.textured_lens,
                "lens",
            ),
            (AttackType::Printout, Label::Attack, counts.printout, "print"),
            (AttackType::Replay, Label::Attack, counts.replay, "replay"),
        ] {
            for i in 0..count {
                let (subject_id, params) = &subjects[i % subjects.len()];
                let s = spec.image_size as f32;
                let geo = Geometry {
                    cx: params.cx_frac * s,
                    cy: params.cy_frac * s,
                    r_pupil: params.rp_frac * s,
                    r_iris: params.ri_frac * s,
                };
                let img = render(spec.image_size, geo, params, attack, &mut rng);
                let name = format!("{}_{tag}_{i:04}.png", split.as_str());
                img.save(image_dir.join(&name)).map_err(|e| {
                    Error::Ingestion {
                        path: image_dir.join(&name),
                        msg: e.to_string(),
                    }
                })?;
                let rel = format!("images/{name}");
                geometry.push((rel.clone(), geo));
                records.push(SampleRecord {
                    path: rel,
                    subject_id: subject_id.clone(),
                    label,
                    attack_type: attack,
                    spectrum: spec.spectrum,
                    database: spec.database.clone(),
                    sensor: "synthcam".into(),
                    split,
                    frame: None,
                });
            }
        }
    }

    let manifest_path = out_dir.join("manifest.csv");
    write_manifest(&manifest_path, &records)?;

    let geometry_path = out_dir.join("geometry.csv");
    let mut w = csv::Writer::from_path(&geometry_path)?;
    w.write_record(["path", "cx", "cy", "r_pupil", "r_iris"])
        .map_err(|e| Error::Input(e.to_string()))?;
    for (path, g) in &geometry {
        w.write_record([
            path.clone(),
            format!("{:.3}", g.cx),
            format!("{:.3}", g.cy),
            format!("{:.3}", g.r_pupil),
            format!("{:.3}", g.r_iris),
        ])
        .map_err(|e| Error::Input(e.to_string()))?;
    }
    w.flush()?;

    Ok(SynthOutput {
        manifest_path,
        geometry_path,
        records,
        geometry,
    })
}

/// Reads the geometry sidecar written by [`synthesize_dataset`].
pub fn load_geometry(path: impl AsRef<Path>) -> Result<Vec<(String, Geometry)>> {
    let mut reader = csv::Reader::from_path(path.as_ref())
        .map_err(|e| Error::Input(e.to_string()))?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Input(e.to_string()))?;
        let f = |i: usize| -> Result<f32> {
            row[i]
                .parse()
                .map_err(|_| Error::Input(format!("bad geometry value `{}`", &row[i])))
        };
        out.push((
            row[0].to_string(),
            Geometry {
                cx: f(1)?,
                cy: f(2)?,
                r_pupil: f(3)?,
                r_iris: f(4)?,
            },
        ));
    }
    Ok(out)
}
