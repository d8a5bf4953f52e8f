//! SVG timeline of one ranked candidate: fingerspelled regions as gray
//! bands, each gloss's score track as a polyline, and a label per token at
//! its detection.

use std::fmt::Write as _;

use thiserror::Error;

use crate::gloss::parse_gloss_sequence;
use crate::pipeline::{AnnotationDocument, ScoreSource, SignScore};

#[derive(Debug, Error, PartialEq)]
pub enum TimelineError {
    #[error("rank {rank} is out of range (document has {candidates} candidates)")]
    RankOutOfRange { rank: usize, candidates: usize },
    #[error("document has no frames")]
    NoFrames,
}

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 48.0;
const BOTTOM: f64 = 44.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

struct Frame {
    frames: usize,
}

impl Frame {
    fn plot_w(&self) -> f64 {
        WIDTH - LEFT - RIGHT
    }

    fn plot_h(&self) -> f64 {
        HEIGHT - TOP - BOTTOM
    }

    /// Left edge of frame `t`.
    fn x(&self, t: f64) -> f64 {
        LEFT + t * self.plot_w() / self.frames as f64
    }

    fn y(&self, score: f64) -> f64 {
        TOP + (1.0 - score.clamp(0.0, 1.0)) * self.plot_h()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Display label: hand-spelled words lose their marker and gain "(fs)".
fn label(sign: &SignScore) -> String {
    if sign.kind.is_hand_spelled() {
        let text = parse_gloss_sequence(&sign.token)
            .ok()
            .and_then(|s| s.tokens.first().map(|t| t.text().to_string()))
            .unwrap_or_else(|| sign.token.clone());
        format!("{text} (fs)")
    } else {
        sign.token.clone()
    }
}

fn axes(svg: &mut String, f: &Frame, fps: f64) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        svg,
        r##"<g class="axes" stroke="#333" stroke-width="1"><line x1="{x0:.2}" y1="{y1:.2}" x2="{x1:.2}" y2="{y1:.2}"/><line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/></g>"##
    );
    let _ = writeln!(svg, r##"<g class="ticks" font-family="sans-serif" font-size="11" fill="#333">"##);
    for s in [0.0, 0.5, 1.0] {
        let y = f.y(s);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" text-anchor="end">{s:.1}</text>"##,
            x0 - 4.0,
            x0 - 7.0,
            y + 4.0
        );
    }
    // One tick per second.
    let seconds = (f.frames as f64 / fps).floor() as usize;
    for sec in 0..=seconds {
        let x = f.x(sec as f64 * fps);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{y1:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{sec}s</text>"##,
            y1 + 4.0,
            y1 + 17.0
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" fill="#333">time</text>"##,
        LEFT + f.plot_w() / 2.0,
        HEIGHT - 8.0
    );
}

/// Renders candidate `rank` (1-based). A document without candidates
/// renders axes only for rank 1.
pub fn render_timeline(doc: &AnnotationDocument, rank: usize) -> Result<String, TimelineError> {
    if doc.frames == 0 {
        return Err(TimelineError::NoFrames);
    }
    let candidate = doc.candidate(rank);
    if candidate.is_none() && !(doc.candidates.is_empty() && rank == 1) {
        return Err(TimelineError::RankOutOfRange {
            rank,
            candidates: doc.candidates.len(),
        });
    }
    let f = Frame { frames: doc.frames };
    let fps = if doc.fps > 0.0 { doc.fps } else { 30.0 };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##
    );
    let title = match candidate {
        Some(c) => format!("{} | rank {} | score {}", c.gloss_sequence, c.rank, c.aggregate_score),
        None => "no candidates".to_string(),
    };
    let _ = writeln!(
        svg,
        r##"<text x="{LEFT:.2}" y="18.00" font-family="sans-serif" font-size="13" fill="#111">{}: {}</text>"##,
        escape(&doc.video_id),
        escape(&title)
    );
    let signs: &[SignScore] = candidate.map_or(&[], |c| &c.per_sign);

    let _ = writeln!(svg, r##"<g class="fingerspelled" fill="#bbbbbb" fill-opacity="0.6">"##);
    for s in signs {
        if let Some((a, b)) = s.fingerspelled_region {
            let _ = writeln!(
                svg,
                r##"<rect x="{:.2}" y="{TOP:.2}" width="{:.2}" height="{:.2}"/>"##,
                f.x(a as f64),
                f.x(b as f64 + 1.0) - f.x(a as f64),
                f.plot_h()
            );
        }
    }
    let _ = writeln!(svg, "</g>");
    axes(&mut svg, &f, fps);

    let _ = writeln!(svg, r##"<g class="tracks" fill="none" stroke-width="1.5">"##);
    let mut colors = Vec::with_capacity(signs.len());
    let mut next = 0;
    for s in signs {
        let track = s.track.as_ref().and_then(|t| doc.tracks.get(t));
        let color = PALETTE[next % PALETTE.len()];
        colors.push(color);
        let Some(values) = track.filter(|_| s.source != ScoreSource::Fingerspelling) else {
            continue;
        };
        next += 1;
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(t, v)| format!("{:.2},{:.2}", f.x(t as f64 + 0.5), f.y(v.value())))
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline data-token="{}" stroke="{color}" points="{}"/>"##,
            escape(&s.token),
            points.join(" ")
        );
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r##"<g class="labels" font-family="sans-serif" font-size="11">"##);
    for (i, s) in signs.iter().enumerate() {
        let Some((a, b)) = s.interval else {
            continue;
        };
        let text = label(s);
        let cx = (f.x(a as f64) + f.x(b as f64 + 1.0)) / 2.0;
        let w = 7.0 * text.chars().count() as f64 + 8.0;
        // Alternate rows so neighbouring labels do not collide.
        let y = TOP - 22.0 + if i % 2 == 0 { 0.0 } else { 11.0 } + 2.0;
        let (color, filled) = if s.source == ScoreSource::Fingerspelling {
            ("#555555", false)
        } else {
            (colors[i], s.in_vocabulary == Some(true))
        };
        let (fill, text_fill) = if filled { (color, "#ffffff") } else { ("#ffffff", color) };
        let _ = writeln!(
            svg,
            r##"<rect class="{}" x="{:.2}" y="{:.2}" width="{w:.2}" height="13.00" rx="2" fill="{fill}" stroke="{color}"/><text x="{cx:.2}" y="{:.2}" text-anchor="middle" fill="{text_fill}">{}</text>"##,
            if filled { "in-vocabulary" } else { "out-of-vocabulary" },
            cx - w / 2.0,
            y - 10.0,
            y,
            escape(&text)
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gloss::GlossKind;
    use crate::nn::ModelFingerprint;
    use crate::pipeline::{
        CandidateAnnotation, CandidateOrigin, FingerspellingTranscript, ModelInfo, PipelineConfig, Score,
        SCHEMA_VERSION,
    };
    use std::collections::BTreeMap;

    fn sign(token: &str, kind: GlossKind, interval: (usize, usize), track: Option<&str>, in_vocab: bool) -> SignScore {
        let fs = kind.is_hand_spelled();
        SignScore {
            token: token.into(),
            kind,
            source: if fs { ScoreSource::Fingerspelling } else { ScoreSource::Sign },
            track: track.map(String::from),
            in_vocabulary: (!fs).then_some(in_vocab),
            score: Score::new(0.8),
            interval: Some(interval),
            peak_frame: None,
            fingerspelled_region: fs.then_some(interval),
            fingerspelling_score: None,
            error: None,
        }
    }

    fn doc(per_sign: Vec<SignScore>) -> AnnotationDocument {
        let fp = ModelFingerprint { architecture: "0".repeat(64), weights_sha256: "0".repeat(64) };
        let mut tracks = BTreeMap::new();
        for name in ["TRAVEL", "ANY", "DOG"] {
            tracks.insert(name.to_string(), (0..40).map(|t| Score::new(t as f64 / 40.0)).collect());
        }
        let candidates = if per_sign.is_empty() {
            Vec::new()
        } else {
            vec![CandidateAnnotation {
                rank: 1,
                index: 0,
                origin: CandidateOrigin::Manual,
                gloss_sequence: "fs-BOB TRAVEL fs-FRICK WITH DOG".into(),
                aggregate_score: Score::new(0.8),
                per_sign,
            }]
        };
        AnnotationDocument {
            schema_version: SCHEMA_VERSION.into(),
            video_id: "v<1>".into(),
            english: String::new(),
            fps: 30.0,
            frames: 40,
            candidates,
            models: ModelInfo { fingerspelling: fp.clone(), isr: fp, llm: None },
            config: PipelineConfig::default(),
            fingerspelling: FingerspellingTranscript { recognized: String::new(), corrected: String::new() },
            tracks,
            errors: Vec::new(),
        }
    }

    fn example() -> AnnotationDocument {
        doc(vec![
            sign("fs-BOB", GlossKind::Fingerspelled, (1, 6), None, false),
            sign("TRAVEL", GlossKind::Gloss, (8, 11), Some("TRAVEL"), true),
            sign("fs-FRICK", GlossKind::Fingerspelled, (13, 20), None, false),
            sign("WITH", GlossKind::Gloss, (22, 26), Some("ANY"), false),
            sign("DOG", GlossKind::Gloss, (28, 33), Some("DOG"), true),
        ])
    }

    #[test]
    fn counts_regions_tracks_and_label_styles() {
        let svg = render_timeline(&example(), 1).unwrap();
        let fs_group = svg.split(r##"<g class="fingerspelled""##).nth(1).unwrap().split("</g>").next().unwrap();
        assert_eq!(fs_group.matches("<rect").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg.matches(r##"class="in-vocabulary""##).count(), 2);
        assert_eq!(svg.matches(r##"class="out-of-vocabulary""##).count(), 3);
        assert!(svg.contains(">BOB (fs)<") && svg.contains(">FRICK (fs)<"));
        assert!(svg.contains("v&lt;1&gt;"));
        assert_eq!(svg, render_timeline(&example(), 1).unwrap());
    }

    #[test]
    fn empty_document_renders_axes_only() {
        let svg = render_timeline(&doc(Vec::new()), 1).unwrap();
        assert!(svg.contains(r##"class="axes""##));
        assert!(!svg.contains("<polyline") && !svg.contains("-vocabulary"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn rank_out_of_range() {
        assert_eq!(
            render_timeline(&example(), 2),
            Err(TimelineError::RankOutOfRange { rank: 2, candidates: 1 })
        );
        assert!(render_timeline(&example(), 0).is_err());
        assert!(render_timeline(&doc(Vec::new()), 2).is_err());
    }
}
