//! Track CSV: header `color,x,y`, one cone per row, LF line endings.

use std::fs;
use std::path::Path;

use crate::model::{ConeColor, Point, TrackDefinition, TrackError};

pub const TRACK_HEADER: &str = "color,x,y";

pub fn parse_track(text: &str) -> Result<TrackDefinition, TrackError> {
    let mut lines = text.split('\n').enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == TRACK_HEADER => {}
        Some((_, h)) => {
            return Err(TrackError::Parse {
                line: 1,
                message: format!("expected header `{TRACK_HEADER}`, found `{h}`"),
            })
        }
        None => {
            return Err(TrackError::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    }

    let mut cones = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 3 {
            return Err(TrackError::Parse {
                line: line_no,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let color = ConeColor::from_tag(fields[0].trim()).ok_or_else(|| TrackError::Parse {
            line: line_no,
            message: format!("unknown color tag `{}`", fields[0]),
        })?;
        let coord = |s: &str| -> Result<f64, TrackError> {
            s.trim().parse::<f64>().map_err(|e| TrackError::Parse {
                line: line_no,
                message: format!("bad coordinate `{s}`: {e}"),
            })
        };
        let x = coord(fields[1])?;
        let y = coord(fields[2])?;
        cones.push((color, Point::new(x, y)));
    }
    TrackDefinition::from_cones(cones)
}

pub fn load_track(path: impl AsRef<Path>) -> Result<TrackDefinition, TrackError> {
    let text = fs::read_to_string(path.as_ref())
        .map_err(|e| TrackError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_track(&text)
}

/// Serializes a track. Coordinates use the shortest representation that
/// parses back to the same `f64`, so save/load/save is byte-stable.
pub fn format_track(track: &TrackDefinition) -> Result<String, TrackError> {
    // re-validate: the fields are public and may have been edited
    TrackDefinition::from_cones(track.cones.iter().map(|c| (c.color, c.position)).collect())?;
    let mut out = String::with_capacity(24 * (track.cones.len() + 1));
    out.push_str(TRACK_HEADER);
    out.push('\n');
    for c in &track.cones {
        out.push_str(&format!("{},{},{}\n", c.color.tag(), c.position.x, c.position.y));
    }
    Ok(out)
}

pub fn save_track(track: &TrackDefinition, path: impl AsRef<Path>) -> Result<(), TrackError> {
    let text = format_track(track)?;
    fs::write(path.as_ref(), text)
        .map_err(|e| TrackError::Io(format!("{}: {e}", path.as_ref().display())))
}
