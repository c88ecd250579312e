use crate::featurespace::{Direction, FeatureSchema, FieldSpec};

/// Rows dated before this key form the KuaiRand-Pure training split.
pub const KUAIRAND_TRAIN_CUTOFF: &str = "20220501";

const KUAIRAND_NUMERICAL: [&str; 14] = [
    "follow_user_num",
    "fans_user_num",
    "friend_user_num",
    "register_days",
    "show_cnt",
    "play_cnt",
    "play_duration",
    "complete_play_cnt",
    "like_cnt",
    "comment_cnt",
    "follow_cnt",
    "share_cnt",
    "download_cnt",
    "collect_cnt",
];

/// KuaiRand-Pure interactions joined with user and video statistics into one
/// CSV. `is_click` is the label, `date` (YYYYMMDD) drives the split and
/// `user_id` groups impressions for GAUC. The loader never fetches data.
pub fn kuairand_pure_schema(buckets: usize) -> FeatureSchema {
    let mut fields = vec![
        FieldSpec::categorical("user_id", 30_000),
        FieldSpec::categorical("video_id", 200_000),
    ];
    fields.extend(
        KUAIRAND_NUMERICAL
            .iter()
            .map(|n| FieldSpec::numerical(*n, buckets, Direction::Increasing)),
    );
    FeatureSchema::new("is_click", fields)
        .expect("preset is valid")
        .with_group("user_id")
        .with_split("date")
}

/// Layout of the 14 rate features of a production short-video dataset
/// (video- and user-side click/like/follow/forward/view/longview/comment
/// rates), labelled by `is_collect`. Documentation only; no data ships.
pub fn industrial_schema(buckets: usize) -> FeatureSchema {
    let rates = ["ctr", "ltr", "wtr", "ftr", "vtr", "lvtr", "cmtr"];
    let mut fields = vec![
        FieldSpec::categorical("user_id", 1_000_000),
        FieldSpec::categorical("video_id", 1_000_000),
    ];
    for side in ["video", "user"] {
        for r in rates {
            fields.push(FieldSpec::numerical(
                format!("{side}_{r}"),
                buckets,
                Direction::Increasing,
            ));
        }
    }
    FeatureSchema::new("is_collect", fields)
        .expect("preset is valid")
        .with_group("user_id")
}
