//! The line-delimited collection format and its ground-truth sidecar.
//!
//! ```text
//! ctxsolve/1 collection <L> <D> <Df> <R>
//! identity <l> <name>
//! photo <id> <Df scene floats>
//! instance <id> <photo_id> <v0> <v1> <v2> <v3> <label|-> <4*D floats>
//! ```
//!
//! The sidecar carries the planted truth:
//!
//! ```text
//! ctxsolve/1 truth <num_instances> <num_photos>
//! label <instance_id> <identity>
//! event <photo_id> <event|->
//! clique <members...>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{
    atomic_write, expect_header, fmt_f64, parse_error, parse_f64, parse_usize, tokenized_lines,
};
use crate::error::{Error, Result};
use crate::model::{validate_collection, Collection, Instance, Photo, NUM_REGIONS};
use crate::synthgen::GroundTruth;

pub fn collection_to_string(c: &Collection) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} collection {} {} {} {}",
        super::FORMAT_VERSION,
        c.num_identities,
        c.feature_dim,
        c.scene_dim,
        NUM_REGIONS
    );
    for (l, name) in c.identity_names.iter().enumerate() {
        let _ = writeln!(out, "identity {l} {name}");
    }
    for photo in &c.photos {
        let _ = write!(out, "photo {}", photo.photo_id);
        for v in &photo.scene_feature {
            let _ = write!(out, " {}", fmt_f64(*v));
        }
        out.push('\n');
    }
    for inst in &c.instances {
        let _ = write!(out, "instance {} {}", inst.instance_id, inst.photo_id);
        for v in inst.visibility {
            let _ = write!(out, " {}", u8::from(v));
        }
        match inst.label {
            Some(l) => {
                let _ = write!(out, " {l}");
            }
            None => out.push_str(" -"),
        }
        for r in 0..NUM_REGIONS {
            for v in &inst.region_features[r] {
                let _ = write!(out, " {}", fmt_f64(*v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn save_collection(c: &Collection, path: &Path) -> Result<()> {
    atomic_write(path, collection_to_string(c).as_bytes())
}

pub fn collection_from_str(text: &str) -> Result<Collection> {
    let mut lines = tokenized_lines(text);
    let (line, header) = lines
        .next()
        .ok_or_else(|| parse_error(0, "empty collection file"))?;
    expect_header(&header, line, "collection")?;
    if header.len() != 6 {
        return Err(parse_error(line, "collection header needs L, D, Df, R"));
    }
    let num_identities = parse_usize(header[2], line, "identity count")?;
    let feature_dim = parse_usize(header[3], line, "feature dimension")?;
    let scene_dim = parse_usize(header[4], line, "scene dimension")?;
    let regions = parse_usize(header[5], line, "region count")?;
    if regions != NUM_REGIONS {
        return Err(parse_error(
            line,
            format!("this build supports {NUM_REGIONS} regions, file declares {regions}"),
        ));
    }

    let mut names = vec![String::new(); num_identities];
    let mut photos = Vec::new();
    let mut instances: Vec<Instance> = Vec::new();
    for (line, tokens) in lines {
        let record_count = format!("(parsed {} photos, {} instances)", photos.len(), instances.len());
        match tokens[0] {
            "identity" => {
                if tokens.len() != 3 {
                    return Err(parse_error(line, format!("identity record truncated {record_count}")));
                }
                let l = parse_usize(tokens[1], line, "identity index")?;
                if l >= num_identities {
                    return Err(parse_error(line, format!("identity index {l} out of range")));
                }
                names[l] = tokens[2].to_string();
            }
            "photo" => {
                if tokens.len() < 2 {
                    return Err(parse_error(line, format!("photo record truncated {record_count}")));
                }
                let photo_id = parse_usize(tokens[1], line, "photo id")?;
                let mut scene = Vec::with_capacity(tokens.len() - 2);
                for t in &tokens[2..] {
                    scene.push(parse_f64(t, line, "scene value")?);
                }
                photos.push(Photo {
                    photo_id,
                    scene_feature: scene,
                    instance_ids: Vec::new(),
                });
            }
            "instance" => {
                if tokens.len() < 7 {
                    return Err(parse_error(line, format!("instance record truncated {record_count}")));
                }
                let instance_id = parse_usize(tokens[1], line, "instance id")?;
                let photo_id = parse_usize(tokens[2], line, "photo id")?;
                let mut visibility = [false; NUM_REGIONS];
                for (r, slot) in visibility.iter_mut().enumerate() {
                    *slot = match tokens[3 + r] {
                        "1" => true,
                        "0" => false,
                        other => {
                            return Err(parse_error(line, format!("bad visibility flag '{other}'")))
                        }
                    };
                }
                let label = match tokens[7] {
                    "-" => None,
                    t => Some(parse_usize(t, line, "label")?),
                };
                let floats = &tokens[8..];
                if floats.len() % NUM_REGIONS != 0 {
                    return Err(parse_error(
                        line,
                        format!(
                            "instance {instance_id} carries {} feature values, not divisible into {NUM_REGIONS} regions {record_count}",
                            floats.len()
                        ),
                    ));
                }
                let per_region = floats.len() / NUM_REGIONS;
                let mut features: [Vec<f64>; NUM_REGIONS] =
                    std::array::from_fn(|_| Vec::with_capacity(per_region));
                for (i, t) in floats.iter().enumerate() {
                    features[i / per_region.max(1)].push(parse_f64(t, line, "feature value")?);
                }
                instances.push(Instance {
                    instance_id,
                    photo_id,
                    region_features: features,
                    visibility,
                    label,
                });
            }
            other => {
                return Err(parse_error(line, format!("unknown record '{other}' {record_count}")));
            }
        }
    }

    // Rebuild photo membership from the instances' photo ids.
    for inst in &instances {
        if let Some(photo) = photos.get_mut(inst.photo_id) {
            photo.instance_ids.push(inst.instance_id);
        }
    }
    for (l, name) in names.iter_mut().enumerate() {
        if name.is_empty() {
            *name = format!("person{l}");
        }
    }

    let c = Collection::new(
        photos,
        instances,
        num_identities,
        feature_dim,
        scene_dim,
        Some(names),
    );
    let violations = validate_collection(&c);
    if violations.is_empty() {
        Ok(c)
    } else {
        Err(Error::Validation(violations))
    }
}

pub fn load_collection(path: &Path) -> Result<Collection> {
    collection_from_str(&fs::read_to_string(path)?)
}

pub fn truth_to_string(truth: &GroundTruth) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} truth {} {}",
        super::FORMAT_VERSION,
        truth.labels.len(),
        truth.events.len()
    );
    for (j, l) in truth.labels.iter().enumerate() {
        let _ = writeln!(out, "label {j} {l}");
    }
    for (p, e) in truth.events.iter().enumerate() {
        match e {
            Some(k) => {
                let _ = writeln!(out, "event {p} {k}");
            }
            None => {
                let _ = writeln!(out, "event {p} -");
            }
        }
    }
    for clique in &truth.cliques {
        let _ = write!(out, "clique");
        for l in clique {
            let _ = write!(out, " {l}");
        }
        out.push('\n');
    }
    out
}

pub fn save_truth(truth: &GroundTruth, path: &Path) -> Result<()> {
    atomic_write(path, truth_to_string(truth).as_bytes())
}

pub fn truth_from_str(text: &str) -> Result<GroundTruth> {
    let mut lines = tokenized_lines(text);
    let (line, header) = lines
        .next()
        .ok_or_else(|| parse_error(0, "empty truth file"))?;
    expect_header(&header, line, "truth")?;
    if header.len() != 4 {
        return Err(parse_error(line, "truth header needs instance and photo counts"));
    }
    let num_instances = parse_usize(header[2], line, "instance count")?;
    let num_photos = parse_usize(header[3], line, "photo count")?;
    let mut labels: Vec<Option<usize>> = vec![None; num_instances];
    let mut events: Vec<Option<Option<usize>>> = vec![None; num_photos];
    let mut cliques = Vec::new();
    for (line, tokens) in lines {
        match tokens[0] {
            "label" => {
                if tokens.len() != 3 {
                    return Err(parse_error(line, "label record truncated"));
                }
                let j = parse_usize(tokens[1], line, "instance id")?;
                if j >= num_instances {
                    return Err(parse_error(line, format!("instance id {j} out of range")));
                }
                labels[j] = Some(parse_usize(tokens[2], line, "label")?);
            }
            "event" => {
                if tokens.len() != 3 {
                    return Err(parse_error(line, "event record truncated"));
                }
                let p = parse_usize(tokens[1], line, "photo id")?;
                if p >= num_photos {
                    return Err(parse_error(line, format!("photo id {p} out of range")));
                }
                events[p] = Some(match tokens[2] {
                    "-" => None,
                    t => Some(parse_usize(t, line, "event")?),
                });
            }
            "clique" => {
                let mut members = Vec::new();
                for t in &tokens[1..] {
                    members.push(parse_usize(t, line, "clique member")?);
                }
                cliques.push(members);
            }
            other => return Err(parse_error(line, format!("unknown record '{other}'"))),
        }
    }
    let labels: Vec<usize> = labels
        .into_iter()
        .enumerate()
        .map(|(j, l)| l.ok_or_else(|| parse_error(0, format!("missing label for instance {j}"))))
        .collect::<Result<_>>()?;
    let events: Vec<Option<usize>> = events
        .into_iter()
        .enumerate()
        .map(|(p, e)| e.ok_or_else(|| parse_error(0, format!("missing event for photo {p}"))))
        .collect::<Result<_>>()?;
    Ok(GroundTruth {
        labels,
        events,
        cliques,
    })
}

pub fn load_truth(path: &Path) -> Result<GroundTruth> {
    truth_from_str(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, GenConfig, InvisibleMode};

    fn sample() -> (Collection, GroundTruth) {
        generate(&GenConfig {
            num_identities: 6,
            num_events: 3,
            photos_per_event: (3, 5),
            visibility_rate: [0.7, 1.0, 1.0, 0.9],
            seed: 42,
            ..GenConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn collection_round_trip_is_lossless() {
        let (c, _) = sample();
        let text = collection_to_string(&c);
        let back = collection_from_str(&text).unwrap();
        assert_eq!(c, back);
        assert_eq!(validate_collection(&back), Vec::new());
        // Re-serialization is byte-stable.
        assert_eq!(text, collection_to_string(&back));
    }

    #[test]
    fn blank_mode_collections_round_trip_too() {
        let (c, _) = generate(&GenConfig {
            visibility_rate: [0.4; 4],
            invisible_mode: InvisibleMode::Blank,
            seed: 9,
            ..GenConfig::default()
        })
        .unwrap();
        let back = collection_from_str(&collection_to_string(&c)).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn truncated_instance_line_names_the_parse_position() {
        let (c, _) = sample();
        let text = collection_to_string(&c);
        let mut lines: Vec<&str> = text.lines().collect();
        let last = lines.len() - 1;
        let truncated = &lines[last][..lines[last].len() / 2];
        // Cut mid-token; keep whole tokens only up to a space.
        let cut = truncated.rfind(' ').unwrap();
        let owned = lines[last][..cut].to_string();
        lines[last] = &owned;
        let text = lines.join("\n");
        let err = collection_from_str(&text).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, last + 1);
                assert!(msg.contains("instances"), "msg: {msg}");
            }
            Error::Validation(_) => {} // a clean token boundary can also surface as a dim violation
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn feature_dim_mismatch_is_a_validation_error_naming_the_instance() {
        let (c, _) = sample();
        let mut text = String::new();
        // Rewrite instance 0 with one region value dropped per region.
        for line in collection_to_string(&c).lines() {
            if line.starts_with("instance 0 ") {
                let tokens: Vec<&str> = line.split_whitespace().collect();
                let d = c.feature_dim;
                let mut kept: Vec<&str> = tokens[..8].to_vec();
                for r in 0..NUM_REGIONS {
                    kept.extend(&tokens[8 + r * d..8 + r * d + d - 1]);
                }
                text.push_str(&kept.join(" "));
            } else {
                text.push_str(line);
            }
            text.push('\n');
        }
        let err = collection_from_str(&text).unwrap_err();
        match err {
            Error::Validation(violations) => {
                assert!(violations.iter().any(|v| v.entity == "instance 0"
                    && v.rule.contains("dimension")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn truth_round_trip_is_lossless() {
        let (_, truth) = sample();
        let text = truth_to_string(&truth);
        let back = truth_from_str(&text).unwrap();
        assert_eq!(truth, back);
    }

    #[test]
    fn missing_truth_entries_are_rejected() {
        let (_, truth) = sample();
        let text = truth_to_string(&truth);
        let filtered: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with("label 3 "))
            .collect();
        assert!(truth_from_str(&filtered.join("\n")).is_err());
    }
}
