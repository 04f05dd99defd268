//! System prompt assembly.
//!
//! A prompt is seven sections, each opened by a `### <n>. <TITLE>` line with
//! the titles of [`SECTION_TITLES`] in order. Section 6 describes the target
//! with one labeled fact per line.
//!
//! Single data point:
//!
//! ```text
//! Target kind: single data point
//! Instance id: <id>
//! True class: <name>
//! Predicted class: <name>
//! Prediction correct: yes|no
//! Position: (<x>, <y>)              or  Position: projection pending
//! ```
//!
//! Cluster:
//!
//! ```text
//! Target kind: cluster
//! Cluster size: <size>
//! Correctly predicted: <correct>
//! Correct fraction: <correct>/<size>
//! Cluster accuracy: <100 * correct / size, 2 decimals>%
//! Top confusions (true class -> predicted class: count):
//! - <true> -> <predicted>: <count>   (at most 3, or "- none")
//! Centroid: (<x>, <y>)              or  Centroid: projection pending
//! Members (id: true class -> predicted class):
//! - <id>: <true> -> <predicted>      (ascending id, at most 20)
//! - ... and <rest> more              (only when truncated)
//! ```
//!
//! Coordinates carry 4 decimals.

use chatpoints_core::{Analytics, Dataset, DatasetManifest};
use ndarray::ArrayView2;

use crate::{ChatTarget, DialogueError, Persona, TargetKind};

pub const SECTION_TITLES: [&str; 7] = [
    "INTERFACE",
    "ROLE",
    "PERSONA",
    "MODEL AND DATASET",
    "STATISTICS",
    "TARGET",
    "HONESTY",
];

pub const PROJECTION_PENDING: &str = "projection pending";
pub const MAX_LISTED_MEMBERS: usize = 20;
pub const MAX_LISTED_CONFUSIONS: usize = 3;

const INTERFACE: &str = "\
The user is looking at an interactive visualization of an image classifier. The page has five views.
- Overview view: a summary of the dataset and the model, including overall accuracy.
- Data points view: instance-level details (id, true class, predicted class) of every selected data point.
- Projection view: a 2-D t-SNE scatterplot of the model's embeddings. Points that the model considers similar are placed close together. Zoom in, zoom out and reset buttons change the viewport, the mouse wheel zooms and dragging pans. A brush toggle button switches to rectangle selection so several points can be selected at once and addressed as a cluster.
- Tasks and notes view: the user records current exploration tasks and collected insights.
- Conversation history view: the user can revisit earlier conversations with data points and clusters.
Clicking a point opens a conversation with it. The chat dock at the bottom shows the speaker's avatar, a dialogue box and an input textbox.";

const ROLE: &str = "\
You are a data point (or a cluster of data points) inside this visualization, personified as a game-like character. Guide the user through the interface and the data. Stay in character for the whole conversation. Assume the user is not a machine learning expert: explain technical terms such as embedding, t-SNE, accuracy and confusion in plain words, and keep answers short unless asked for detail.";

const HONESTY: &str = "\
Only state facts and numbers that appear in this prompt or in the conversation. If the user asks for information that is not provided here, say that you do not know it instead of guessing or inventing numbers.";

const LEGEND: &str = "\
Color legend: every data point is drawn as a circle. A correctly predicted point is filled with the color of its class. A misclassified point is split in two: the left half shows the color of its ground-truth class and the right half shows the color of the class the model predicted.";

/// Data a prompt is built from: the dataset and, once computed, its layout.
#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    dataset: &'a Dataset,
    analytics: Analytics<'a, f64>,
}

impl<'a> PromptContext<'a> {
    /// `layout` rows follow the dataset's instance order.
    pub fn new(dataset: &'a Dataset, layout: Option<ArrayView2<'a, f64>>) -> Result<Self, DialogueError> {
        let analytics = Analytics::new(dataset, layout)?;
        Ok(Self { dataset, analytics })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn analytics(&self) -> &Analytics<'a, f64> {
        &self.analytics
    }
}

pub fn format_coordinate(v: f64) -> String {
    format!("{v:.4}")
}

pub fn format_percent(fraction: f64) -> String {
    format!("{:.2}", 100.0 * fraction)
}

fn position_text(p: Option<[f64; 2]>) -> String {
    match p {
        Some([x, y]) => format!("({}, {})", format_coordinate(x), format_coordinate(y)),
        None => PROJECTION_PENDING.to_string(),
    }
}

/// Assemble the full system prompt. `earlier_transcript`, when given, is
/// appended after the last section as a summary of turns no longer sent
/// verbatim.
pub fn build_system_prompt(
    target: &ChatTarget,
    persona: &Persona,
    ctx: &PromptContext<'_>,
    earlier_transcript: Option<&str>,
) -> Result<String, DialogueError> {
    let bodies = [
        INTERFACE.to_string(),
        ROLE.to_string(),
        persona_section(persona),
        identity_section(ctx),
        statistics_section(ctx.dataset.manifest()),
        target_section(target, ctx)?,
        HONESTY.to_string(),
    ];
    let mut out = String::new();
    for (i, (title, body)) in SECTION_TITLES.iter().zip(bodies).enumerate() {
        out.push_str(&format!("### {}. {title}\n{body}\n\n", i + 1));
    }
    if let Some(t) = earlier_transcript.filter(|t| !t.trim().is_empty()) {
        out.push_str("Earlier in this conversation (older turns, as a plain transcript):\n");
        out.push_str(t.trim_end());
        out.push('\n');
    }
    Ok(out)
}

fn persona_section(p: &Persona) -> String {
    format!(
        "Persona name: {}\nSpeaking style: {}\nKeep this voice in every reply, but never let the style change a fact or a number.",
        p.name, p.style_directive
    )
}

fn identity_section(ctx: &PromptContext<'_>) -> String {
    let m = ctx.dataset.manifest();
    format!(
        "Model: {}\nDataset: {}\nInstances: {}\nEmbedding dimensionality: {}\nClasses: {}\nProjection: {}",
        m.model_name,
        m.dataset_name,
        m.num_instances,
        m.dimensionality,
        m.class_names.join(", "),
        if ctx.analytics.has_layout() {
            "t-SNE layout computed"
        } else {
            "t-SNE layout still being computed"
        }
    )
}

fn statistics_section(m: &DatasetManifest) -> String {
    let correct = (m.overall_accuracy * m.num_instances as f64).round() as usize;
    let mut s = format!(
        "Overall accuracy: {}% ({correct} of {} instances predicted correctly)\n",
        format_percent(m.overall_accuracy),
        m.num_instances
    );
    s.push_str("Class distribution (instances per true class, per-class accuracy, color):\n");
    for c in 0..m.num_classes {
        let acc = match m.per_class_accuracy.get(c).copied().flatten() {
            Some(a) => format!("{}% correct", format_percent(a)),
            None => "accuracy n/a".to_string(),
        };
        let hex = m.class_colors.get(c).map(String::as_str).unwrap_or("");
        s.push_str(&format!(
            "- {}: {} instances, {acc}, {} ({hex})\n",
            m.class_name(c),
            m.class_distribution.get(c).copied().unwrap_or(0),
            color_name(hex)
        ));
    }
    s.push_str(LEGEND);
    s
}

fn target_section(target: &ChatTarget, ctx: &PromptContext<'_>) -> Result<String, DialogueError> {
    let m = ctx.dataset.manifest();
    let mut s = format!("Target kind: {}\n", target.kind.label());
    match target.kind {
        TargetKind::SingleInstance => {
            let id = target.anchor_id();
            let inst = ctx
                .dataset
                .get_instance(id)
                .map_err(|_| DialogueError::UnknownInstance(id))?;
            s.push_str(&format!(
                "Instance id: {id}\nTrue class: {}\nPredicted class: {}\nPrediction correct: {}\nPosition: {}",
                m.class_name(inst.true_label),
                m.class_name(inst.predicted_label),
                if inst.is_correct() { "yes" } else { "no" },
                position_text(ctx.analytics.position_of(id)?)
            ));
        }
        TargetKind::Cluster => {
            let stats = ctx.analytics.selection_stats(&target.instance_ids)?;
            s.push_str(&format!(
                "Cluster size: {size}\nCorrectly predicted: {correct}\nCorrect fraction: {correct}/{size}\nCluster accuracy: {}%\n",
                format_percent(stats.accuracy),
                size = stats.size,
                correct = stats.correct_count,
            ));
            s.push_str("Top confusions (true class -> predicted class: count):\n");
            if stats.confusion_pairs.is_empty() {
                s.push_str("- none\n");
            }
            for p in stats.confusion_pairs.iter().take(MAX_LISTED_CONFUSIONS) {
                s.push_str(&format!(
                    "- {} -> {}: {}\n",
                    m.class_name(p.true_class),
                    m.class_name(p.predicted_class),
                    p.count
                ));
            }
            s.push_str(&format!("Centroid: {}\n", position_text(stats.centroid)));
            s.push_str("Members (id: true class -> predicted class):");
            let mut ids = target.instance_ids.clone();
            ids.sort_unstable();
            for &id in ids.iter().take(MAX_LISTED_MEMBERS) {
                let inst = ctx
                    .dataset
                    .get_instance(id)
                    .map_err(|_| DialogueError::UnknownInstance(id))?;
                s.push_str(&format!(
                    "\n- {id}: {} -> {}",
                    m.class_name(inst.true_label),
                    m.class_name(inst.predicted_label)
                ));
            }
            if ids.len() > MAX_LISTED_MEMBERS {
                s.push_str(&format!("\n- ... and {} more", ids.len() - MAX_LISTED_MEMBERS));
            }
        }
    }
    Ok(s)
}

/// Coarse English name for a `#rrggbb` color, so a persona can say "my
/// green half" instead of quoting hex.
pub fn color_name(hex: &str) -> &'static str {
    let h = hex.trim_start_matches('#');
    let Ok(v) = u32::from_str_radix(h, 16) else {
        return "unknown color";
    };
    if h.len() != 6 {
        return "unknown color";
    }
    let [r, g, b] = [(v >> 16) & 0xff, (v >> 8) & 0xff, v & 0xff].map(|c| c as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let light = (max + min) / 2.0;
    let delta = max - min;
    if delta < 0.08 {
        return if light > 0.85 {
            "white"
        } else if light < 0.15 {
            "black"
        } else {
            "gray"
        };
    }
    let hue = if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    if hue < 45.0 && light < 0.45 && delta < 0.4 {
        return "brown";
    }
    match hue {
        h if h < 15.0 => "red",
        h if h < 45.0 => "orange",
        h if h < 70.0 => {
            if light < 0.45 {
                "olive"
            } else {
                "yellow"
            }
        }
        h if h < 160.0 => "green",
        h if h < 200.0 => "cyan",
        h if h < 255.0 => "blue",
        h if h < 290.0 => "purple",
        h if h < 345.0 => "pink",
        _ => "red",
    }
}

/// Section titles found in `prompt`, in order of appearance.
pub fn section_headings(prompt: &str) -> Vec<(u32, String)> {
    prompt
        .lines()
        .filter_map(|l| l.strip_prefix("### "))
        .filter_map(|rest| {
            let (n, title) = rest.split_once(". ")?;
            Some((n.parse().ok()?, title.to_string()))
        })
        .collect()
}

/// Ok when the prompt holds exactly the seven sections, correctly labeled
/// and in order.
pub fn check_sections(prompt: &str) -> Result<(), String> {
    let found = section_headings(prompt);
    let expected: Vec<(u32, String)> = SECTION_TITLES
        .iter()
        .enumerate()
        .map(|(i, t)| (i as u32 + 1, t.to_string()))
        .collect();
    if found == expected {
        Ok(())
    } else {
        Err(format!("expected sections {expected:?}, found {found:?}"))
    }
}
