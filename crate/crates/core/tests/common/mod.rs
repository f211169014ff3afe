#![allow(dead_code)]

use std::collections::BTreeSet;

use gesteval::model::{ComparisonTask, JuiceOption, Response, SegmentId, Stimulus, StudyKind, TaskId, VoteRecord};

pub fn stimulus(condition: &str, segment: &str, audio: &str, muted: bool) -> Stimulus {
    Stimulus {
        id: format!("{condition}|{segment}|{audio}|{muted}").into(),
        condition_id: condition.into(),
        segment_id: segment.into(),
        seed_index: 0,
        video_uri: format!("v/{condition}-{segment}-{audio}.mp4"),
        audio_segment_id: SegmentId::new(audio),
        muted,
    }
}

pub fn realism_task(left: &str, right: &str) -> ComparisonTask {
    ComparisonTask {
        id: TaskId::new(format!("r:{left}:{right}")),
        study_kind: StudyKind::Realism,
        left: stimulus(left, "s1", "s1", true),
        right: stimulus(right, "s1", "s1", true),
        attention_check: None,
    }
}

/// Alignment task for `condition`; the matched video sits on the left when `matched_left`.
pub fn alignment_task(condition: &str, matched_left: bool) -> ComparisonTask {
    let matched = stimulus(condition, "s1", "s1", false);
    let mismatched = stimulus(condition, "s1", "s2", false);
    let (left, right) = if matched_left { (matched, mismatched) } else { (mismatched, matched) };
    ComparisonTask {
        id: TaskId::new(format!("a:{condition}:{}", if matched_left { "ml" } else { "mr" })),
        study_kind: StudyKind::Alignment,
        left,
        right,
        attention_check: None,
    }
}

pub fn vote(task: &ComparisonTask, taker: &str, page: u32, response: Response) -> VoteRecord {
    let juice: BTreeSet<JuiceOption> = if response == Response::Tie {
        BTreeSet::new()
    } else {
        BTreeSet::from([task.study_kind.juice_options()[0]])
    };
    VoteRecord {
        session_id: format!("{taker}.session").into(),
        taker_id: taker.into(),
        page_index: page,
        task_id: task.id.clone(),
        response: Some(response),
        juice_options: juice,
        juice_other_text: None,
        timestamp_ms: page as u64,
        skipped: false,
    }
}
