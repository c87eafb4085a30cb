//! Small deterministic datasets for tests, examples and demos, both in memory
//! and written to disk with matching adapter profiles.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::covariate::{pool_of, DEFAULT_POOL_FRACTIONS};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::image::{write_png, RawImage};
use crate::io::write_atomic;
use crate::masks::{MaskAnnotation, MaskGeometry, MaskTarget};
use crate::rng::SeededRng;
use crate::table::{columns, MetaTable};
use crate::taxonomy::{Pathology, Taxonomy, TriState};

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(format!("create {}", p.display()), e))
}

fn write_text(p: &Path, s: &str) -> Result<()> {
    write_atomic(p, s.as_bytes())
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidArgument(format!("fixture csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(format!("fixture csv: {e}")))
}

/// Random labels (about 20% unknown), views, patient ids and 10×8 8-bit
/// images. Rows with a present first pathology get a box annotation.
pub fn synthetic_dataset(name: &str, pathologies: &[&str], n: usize, seed: u64) -> Result<Dataset> {
    let tax = Taxonomy::from_names(pathologies)?;
    let mut rng = SeededRng::new(seed);
    let views = ["PA", "AP", "Lateral"];
    let mut labels = Vec::with_capacity(n);
    let mut images = Vec::with_capacity(n);
    let mut anns = Vec::with_capacity(n);
    let mut pids = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<TriState> = (0..tax.len())
            .map(|_| match rng.index_below(5) {
                0 => TriState::Unknown,
                1 | 2 => TriState::Present,
                _ => TriState::Absent,
            })
            .collect();
        anns.push(if row[0] == TriState::Present {
            vec![MaskAnnotation {
                target: MaskTarget::Pathology(tax.as_slice()[0].clone()),
                geometry: MaskGeometry::Box {
                    x: rng.index_below(6) as i64,
                    y: rng.index_below(4) as i64,
                    w: 1 + rng.index_below(4) as i64,
                    h: 1 + rng.index_below(4) as i64,
                },
            }]
        } else {
            Vec::new()
        });
        labels.push(row);
        let pixels = (0..80).map(|_| rng.index_below(256) as u16).collect();
        images.push(RawImage::new(10, 8, 8, pixels)?);
        // about two images per patient
        pids.push(Some(format!("{name}-{}", i / 2)));
        vs.push(Some(views[rng.index_below(3)].to_string()));
    }
    let mut csv = MetaTable::with_rows(n);
    csv.set_column(columns::PATIENT_ID, pids)?;
    csv.set_column(columns::VIEW, vs)?;
    Dataset::from_memory(name, tax, labels, csv, images)?.with_mask_annotations(anns)
}

/// Findings of the NIH-style fixture, one entry per row.
pub const NIH_FINDINGS: [&str; 12] = [
    "Cardiomegaly|Effusion",
    "No Finding",
    "Effusion",
    "Atelectasis",
    "Atelectasis|Effusion|Mass",
    "No Finding",
    "Pneumothorax",
    "Cardiomegaly",
    "No Finding",
    "Mass|Nodule",
    "Effusion|Pneumothorax",
    "No Finding",
];

/// Pathologies declared by the NIH-style profile.
pub const NIH_PATHOLOGIES: [&str; 6] =
    ["Atelectasis", "Cardiomegaly", "Effusion", "Mass", "Nodule", "Pneumothorax"];

/// Write a 12-image NIH-style corpus (8-bit 16×16 PNGs, pipe-delimited
/// findings, bounding-box sidecar) and return its profile path.
pub fn write_nih_fixture(dir: &Path) -> Result<PathBuf> {
    create_dir(&dir.join("images"))?;
    let patients = [1, 1, 2, 3, 3, 4, 5, 6, 7, 8, 9, 10];
    let mut rows = Vec::new();
    for (i, findings) in NIH_FINDINGS.iter().enumerate() {
        let file = format!("{:08}_000.png", i);
        let pixels = (0..256).map(|k| ((k + 7 * i) % 256) as u16).collect();
        write_png(&dir.join("images").join(&file), &RawImage::new(16, 16, 8, pixels)?)?;
        rows.push(vec![
            file,
            findings.to_string(),
            patients[i].to_string(),
            (if i % 3 == 0 { "AP" } else { "PA" }).to_string(),
            (40 + i).to_string(),
        ]);
    }
    write_atomic(
        &dir.join("Data_Entry.csv"),
        &csv_bytes(&["Image Index", "Finding Labels", "Patient ID", "View Position", "Patient Age"], &rows)?,
    )?;
    let boxes = [
        (0, "Cardiomegaly", "2", "3", "8", "6"),
        (4, "Mass", "1.5", "1.5", "3", "3"),
        (6, "Pneumothorax", "12", "0", "6", "7"),
    ];
    let box_rows: Vec<Vec<String>> = boxes
        .iter()
        .map(|(i, l, x, y, w, h)| {
            vec![
                format!("{:08}_000.png", i),
                l.to_string(),
                x.to_string(),
                y.to_string(),
                w.to_string(),
                h.to_string(),
            ]
        })
        .collect();
    write_atomic(
        &dir.join("BBox_List.csv"),
        &csv_bytes(&["Image Index", "Finding Label", "x", "y", "w", "h"], &box_rows)?,
    )?;
    let profile = json!({
        "name": "NIH_Dataset",
        "imgpath": "images",
        "csvpath": "Data_Entry.csv",
        "image_column": "Image Index",
        "bit_depth": 8,
        "labels": {
            "mode": "delimited_string",
            "column": "Finding Labels",
            "delimiter": "|",
            "negation_token": "No Finding",
            "pathologies": NIH_PATHOLOGIES,
        },
        "patientid_column": "Patient ID",
        "view_column": "View Position",
        "mask_source": {
            "kind": "boxes",
            "csvpath": "BBox_List.csv",
            "image_column": "Image Index",
            "label_column": "Finding Label",
        },
    });
    let path = dir.join("nih.json");
    write_text(&path, &serde_json::to_string_pretty(&profile)?)?;
    Ok(path)
}

/// Write a 6-image CheXpert-style corpus (16-bit 12×10 PNGs, one column per
/// finding with `-1.0` for uncertain) and return its profile path.
pub fn write_chexpert_fixture(dir: &Path) -> Result<PathBuf> {
    create_dir(&dir.join("train"))?;
    let table: [(&str, &str, &str, &str, &str, &str); 6] = [
        ("patient1", "AP", "1.0", "-1.0", "", "3"),
        ("patient1", "PA", "0.0", "1.0", "0.0", "10"),
        ("patient2", "AP", "-1.0", "0.0", "1.0", "0"),
        ("patient3", "LL", "", "", "1.0", "5"),
        ("patient4", "AP", "1.0", "1.0", "-1.0", "1"),
        ("patient5", "PA", "0.0", "0.0", "0.0", "2"),
    ];
    let mut rows = Vec::new();
    for (i, (pid, view, edema, eff, cardio, days)) in table.iter().enumerate() {
        let file = format!("view{i}_frontal.png");
        let pixels = (0..120).map(|k| ((k * 541 + i * 4099) % 65536) as u16).collect();
        write_png(&dir.join("train").join(&file), &RawImage::new(10, 12, 16, pixels)?)?;
        rows.push([file.as_str(), pid, view, edema, eff, cardio, days].map(str::to_string).to_vec());
    }
    write_atomic(
        &dir.join("train.csv"),
        &csv_bytes(
            &["Path", "Patient", "AP/PA", "Edema", "Pleural Effusion", "Cardiomegaly", "Days"],
            &rows,
        )?,
    )?;
    let profile = json!({
        "name": "CheX_Dataset",
        "imgpath": "train",
        "csvpath": "train.csv",
        "image_column": "Path",
        "bit_depth": 16,
        "labels": {
            "mode": "per_column",
            "columns": [
                {"pathology": "Edema"},
                {"pathology": "Effusion", "column": "Pleural Effusion"},
                {"pathology": "Cardiomegaly"},
            ],
        },
        "patientid_column": "Patient",
        "view_column": "AP/PA",
        "view_map": {"LL": "Lateral"},
        "offset_column": "Days",
    });
    let path = dir.join("chexpert.json");
    write_text(&path, &serde_json::to_string_pretty(&profile)?)?;
    Ok(path)
}

/// Write any dataset with loadable images as PNGs plus a per-column CSV and
/// return the profile path. Unknown labels are written as empty cells.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<PathBuf> {
    create_dir(&dir.join("images"))?;
    let mut depth = None;
    let mut rows = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let img = ds.image_ref(i).expect("row in range").load()?;
        if *depth.get_or_insert(img.bit_depth()) != img.bit_depth() {
            return Err(Error::InvalidArgument("fixture images mix bit depths".into()));
        }
        let file = format!("{i:05}.png");
        write_png(&dir.join("images").join(&file), &img)?;
        let mut row = vec![
            file,
            ds.csv().get(i, columns::PATIENT_ID).unwrap_or("").to_string(),
            ds.csv().get(i, columns::VIEW).unwrap_or("").to_string(),
        ];
        row.extend(ds.labels().row(i).iter().map(|t| match t {
            TriState::Unknown => String::new(),
            t => t.as_csv().to_string(),
        }));
        rows.push(row);
    }
    let names: Vec<&str> = ds.pathologies().iter().map(Pathology::as_str).collect();
    let header: Vec<&str> =
        ["file", "patient", "projection"].into_iter().chain(names.iter().copied()).collect();
    write_atomic(&dir.join("labels.csv"), &csv_bytes(&header, &rows)?)?;
    let profile = json!({
        "name": ds.name(),
        "imgpath": "images",
        "csvpath": "labels.csv",
        "image_column": "file",
        "bit_depth": depth.unwrap_or(8),
        "labels": {
            "mode": "per_column",
            "columns": names.iter().map(|p| json!({"pathology": p})).collect::<Vec<_>>(),
        },
        "patientid_column": "patient",
        "view_column": "projection",
    });
    let path = dir.join(format!("{}.json", ds.name()));
    write_text(&path, &serde_json::to_string_pretty(&profile)?)?;
    Ok(path)
}

/// Two single-patient-per-image sources whose train, valid and test pools
/// each hold exactly `per_cell` positives and `per_cell` negatives of
/// `pathology` under `seed` and the default pool fractions. The first source
/// is darker than the second.
pub fn covariate_pair(pathology: &str, per_cell: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let mk = |name: &str, level: u16| -> Result<Dataset> {
        let mut need = [[per_cell; 2]; 3];
        let mut labels = Vec::new();
        let mut pids = Vec::new();
        let mut k = 0u64;
        while need.iter().flatten().any(|&c| c > 0) {
            let pid = format!("{name}-{k}");
            let pool = pool_of(&pid, seed, DEFAULT_POOL_FRACTIONS);
            // alternate labels so both classes fill at similar rates
            let label = (k % 2) as usize;
            if need[pool][label] > 0 {
                need[pool][label] -= 1;
                labels.push(vec![TriState::from_bool(label == 1)]);
                pids.push(Some(pid));
            }
            k += 1;
        }
        let n = labels.len();
        let images = (0..n)
            .map(|i| RawImage::new(8, 8, 8, (0..64).map(|p| level + ((p + i) % 8) as u16).collect()))
            .collect::<Result<Vec<_>>>()?;
        let mut csv = MetaTable::with_rows(n);
        csv.set_column(columns::PATIENT_ID, pids)?;
        csv.set_column(columns::VIEW, vec![Some("PA".to_string()); n])?;
        Dataset::from_memory(name, Taxonomy::from_names(&[pathology])?, labels, csv, images)
    };
    Ok((mk("SourceA", 40)?, mk("SourceB", 180)?))
}

/// Square region `(row, col, height, width)`.
pub type Patch = (usize, usize, usize, usize);

/// Noisy `size`×`size` 8-bit images labelled for `Effusion`; positives carry
/// a saturated patch.
pub fn patch_dataset(size: usize, patch: Patch, n_pos: usize, n_neg: usize, seed: u64) -> Result<Dataset> {
    let (pr, pc, ph, pw) = patch;
    if pr + ph > size || pc + pw > size || ph == 0 || pw == 0 {
        return Err(Error::InvalidArgument(format!("patch {patch:?} outside {size}x{size}")));
    }
    let mut rng = SeededRng::new(seed);
    let n = n_pos + n_neg;
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let positive = i < n_pos;
        let pixels = (0..size * size)
            .map(|k| {
                let (r, c) = (k / size, k % size);
                if positive && (pr..pr + ph).contains(&r) && (pc..pc + pw).contains(&c) {
                    255
                } else {
                    rng.index_below(101) as u16
                }
            })
            .collect();
        images.push(RawImage::new(size, size, 8, pixels)?);
        labels.push(vec![TriState::from_bool(positive)]);
    }
    Dataset::from_memory(
        "PatchDataset",
        Taxonomy::from_names(&["Effusion"])?,
        labels,
        MetaTable::with_rows(n),
        images,
    )
}

/// Every image identical; labels alternate for `Effusion`.
pub fn identical_dataset(width: usize, height: usize, n: usize) -> Result<Dataset> {
    let img = RawImage::new(width, height, 8, (0..width * height).map(|k| (k * 37 % 256) as u16).collect())?;
    let labels = (0..n).map(|i| vec![TriState::from_bool(i % 2 == 0)]).collect();
    Dataset::from_memory(
        "IdenticalDataset",
        Taxonomy::from_names(&["Effusion"])?,
        labels,
        MetaTable::with_rows(n),
        vec![img; n],
    )
}

/// `n` copies of a constant image with alternating `Effusion` labels.
pub fn uniform_dataset(name: &str, n: usize, size: usize, bit_depth: u8, value: u16) -> Result<Dataset> {
    let img = RawImage::new(size, size, bit_depth, vec![value; size * size])?;
    let labels = (0..n).map(|i| vec![TriState::from_bool(i % 2 == 1)]).collect();
    let mut csv = MetaTable::with_rows(n);
    csv.set_column(columns::PATIENT_ID, (0..n).map(|i| Some(format!("u{i}"))).collect())?;
    csv.set_column(columns::VIEW, vec![Some("PA".to_string()); n])?;
    Dataset::from_memory(name, Taxonomy::from_names(&["Effusion"])?, labels, csv, vec![img; n])
}
