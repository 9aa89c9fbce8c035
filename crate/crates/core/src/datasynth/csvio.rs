use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{sensor_band_config, CloudLabel, Pixel, PixelDataset, SensorConfig, SensorName};
use crate::{Error, Result};

const LEADING: [&str; 8] = [
    "pixel_id",
    "surface_pressure_mbar",
    "water_vapor_mm",
    "ozone_du",
    "surface_type",
    "view_zenith_deg",
    "solar_zenith_deg",
    "rel_azimuth_deg",
];
const TRAILING: [&str; 2] = ["label", "cot_log10"];

fn band_column(center: f64) -> String {
    format!("refl_{center}")
}

pub fn write_csv<W: Write>(dataset: &PixelDataset, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header: Vec<String> = LEADING.iter().map(|s| s.to_string()).collect();
    header.extend(dataset.sensor.band_centers_nm.iter().map(|&c| band_column(c)));
    header.extend(TRAILING.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for p in &dataset.pixels {
        let mut rec = vec![
            p.pixel_id.to_string(),
            p.surface_pressure_mbar.to_string(),
            p.water_vapor_mm.to_string(),
            p.ozone_du.to_string(),
            p.surface_type.as_str().to_string(),
            p.view_zenith_deg.to_string(),
            p.solar_zenith_deg.to_string(),
            p.rel_azimuth_deg.to_string(),
        ];
        rec.extend(p.reflectances.iter().map(|r| r.to_string()));
        rec.push(p.label.as_str().to_string());
        rec.push(p.cot_log10.map(|c| c.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Write `dataset` as UTF-8 CSV with LF line endings.
pub fn save_csv(dataset: &PixelDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_csv(dataset, &mut out)?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Read a dataset. With `expected` set, the reflectance columns must match
/// that sensor; otherwise the sensor is recognised from the band centres.
pub fn load_csv(path: impl AsRef<Path>, expected: Option<SensorName>) -> Result<PixelDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, expected)
}

pub fn read_csv<R: std::io::Read>(input: R, expected: Option<SensorName>) -> Result<PixelDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();

    for (pos, name) in LEADING.iter().enumerate() {
        if cols.get(pos) != Some(name) {
            return Err(Error::Parse {
                row: 0,
                detail: format!("missing column `{name}` at position {}", pos + 1),
            });
        }
    }
    if cols.len() < LEADING.len() + TRAILING.len() || cols[cols.len() - 2..] != TRAILING {
        return Err(Error::Parse {
            row: 0,
            detail: "missing trailing columns `label,cot_log10`".into(),
        });
    }
    let band_cols = &cols[LEADING.len()..cols.len() - 2];
    let mut centers = Vec::with_capacity(band_cols.len());
    for c in band_cols {
        let center = c
            .strip_prefix("refl_")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Parse {
                row: 0,
                detail: format!("unexpected column `{c}`"),
            })?;
        centers.push(center);
    }
    let sensor = resolve_sensor(&centers, expected)?;

    let mut pixels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let field = |j: usize| record.get(j).unwrap_or("");
        let num = |j: usize| -> Result<f64> {
            field(j).trim().parse::<f64>().map_err(|_| Error::Parse {
                row,
                detail: format!("column `{}`: `{}` is not a number", cols[j], field(j)),
            })
        };
        if record.len() != cols.len() {
            return Err(Error::Parse {
                row,
                detail: format!("{} fields, header has {}", record.len(), cols.len()),
            });
        }
        let pixel_id = field(0).trim().parse::<u64>().map_err(|_| Error::Parse {
            row,
            detail: format!("pixel_id `{}` is not an integer", field(0)),
        })?;
        let surface_type = field(4)
            .parse()
            .map_err(|detail| Error::Parse { row, detail })?;
        let label: CloudLabel = field(cols.len() - 2)
            .parse()
            .map_err(|detail| Error::Parse { row, detail })?;
        let cot_field = field(cols.len() - 1).trim();
        let cot_log10 = if cot_field.is_empty() {
            None
        } else {
            Some(num(cols.len() - 1)?)
        };
        let reflectances = (LEADING.len()..cols.len() - 2)
            .map(num)
            .collect::<Result<Vec<_>>>()?;
        pixels.push(Pixel {
            pixel_id,
            surface_pressure_mbar: num(1)?,
            water_vapor_mm: num(2)?,
            ozone_du: num(3)?,
            surface_type,
            view_zenith_deg: num(5)?,
            solar_zenith_deg: num(6)?,
            rel_azimuth_deg: num(7)?,
            reflectances,
            label,
            cot_log10,
        });
    }
    let dataset = PixelDataset { sensor, pixels };
    dataset.validate()?;
    Ok(dataset)
}

fn resolve_sensor(centers: &[f64], expected: Option<SensorName>) -> Result<SensorConfig> {
    match expected {
        Some(name) => {
            let cfg = sensor_band_config(name);
            if cfg.band_count() != centers.len() {
                return Err(Error::Data(format!(
                    "band-count mismatch: {name} has {} reflectance bands, file has {}",
                    cfg.band_count(),
                    centers.len()
                )));
            }
            if cfg.band_centers_nm != centers {
                return Err(Error::Data(format!(
                    "reflectance columns do not match the {name} band centres"
                )));
            }
            Ok(cfg)
        }
        None => SensorName::ALL
            .into_iter()
            .map(sensor_band_config)
            .find(|cfg| cfg.band_centers_nm == centers)
            .ok_or_else(|| {
                Error::Data(format!(
                    "{} reflectance columns match no known sensor",
                    centers.len()
                ))
            }),
    }
}
