use mt3_core::store::{parse_micro_skill, resample_trajectory, SkillParser, DEFAULT_SPACING};
use mt3_core::{occupancy_embedding, Dataset, DemoInput, EndEffectorState, Gripper, PointCloud, Pose, Vec3};
use proptest::prelude::*;

const SKILLS: [&str; 4] = ["open bottle", "hang mug", "open box", "pour kettle"];
const DECOR: [&str; 4] = ["", "the ", "the red ", "a small "];

fn input(id: usize, skill: usize, decor: usize, x: f64, yaw: f64, steps: &[(f64, bool)]) -> DemoInput {
    let cloud = PointCloud::robot(
        (0..60)
            .map(|i| {
                let a = i as f64 * 0.41;
                Vec3::new(x + 0.04 * a.cos(), 0.04 * a.sin(), 0.003 * (i % 17) as f64)
            })
            .collect(),
    )
    .unwrap();
    let base = Pose::from_translation(Vec3::new(x, 0.0, 0.15)).compose(&Pose::rz(yaw));
    let mut trajectory = vec![EndEffectorState { pose: base, gripper: Gripper::Open, time_index: 0 }];
    for (i, (dz, closed)) in steps.iter().enumerate() {
        let prev = trajectory.last().unwrap().pose;
        trajectory.push(EndEffectorState {
            pose: prev.compose(&Pose::from_xyz(0.0, 0.0, *dz)),
            gripper: if *closed { Gripper::Closed } else { Gripper::Open },
            time_index: 2 * i as u64 + 2,
        });
    }
    let (verb, noun) = SKILLS[skill].split_once(' ').unwrap();
    DemoInput {
        id: format!("demo-{id:03}"),
        description: format!("{verb} {}{noun}", DECOR[decor]),
        object_cloud: cloud,
        trajectory,
        object_instance_id: (id % 2 == 0).then(|| format!("inst-{id}")),
        object_pose: (id % 3 == 0).then(|| Pose::from_xyz(x, 0.0, 0.0)),
    }
}

fn inputs() -> impl Strategy<Value = Vec<DemoInput>> {
    prop::collection::vec(
        (
            0usize..4,
            0usize..4,
            0.35f64..1.0,
            -3.0f64..3.0,
            prop::collection::vec((-0.05f64..0.05, any::<bool>()), 1..5),
        ),
        1..10,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (s, d, x, yaw, steps))| input(i, s, d, x, yaw, &steps))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn index_partitions_ids_after_any_ingest_sequence(demos in inputs()) {
        let mut ds = Dataset::default();
        for d in demos.iter().cloned() {
            ds.ingest(d).unwrap();
            prop_assert!(ds.check_index());
        }
        let mut from_index: Vec<String> = ds.skill_index().values().flatten().cloned().collect();
        from_index.sort();
        let mut all: Vec<String> = ds.demos().map(|d| d.id.clone()).collect();
        all.sort();
        prop_assert_eq!(from_index, all);
        for (skill, ids) in ds.skill_index() {
            for id in ids {
                prop_assert_eq!(&ds.get(id).unwrap().micro_skill, skill);
            }
        }
    }

    #[test]
    fn archive_round_trip_is_bit_exact(demos in inputs()) {
        let mut ds = Dataset::default();
        for d in demos {
            ds.ingest(d).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        prop_assert_eq!(&back, &ds);
        for d in ds.demos() {
            let e = back.get(&d.id).unwrap();
            for (a, b) in d.trajectory.iter().zip(&e.trajectory) {
                prop_assert_eq!(a.pose.to_array().map(f64::to_bits), b.pose.to_array().map(f64::to_bits));
            }
            for (a, b) in d.object_cloud.points().iter().zip(e.object_cloud.points()) {
                prop_assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
            }
            prop_assert_eq!(d.embedding.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            e.embedding.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn stored_demos_are_resampled_and_embedded(demos in inputs()) {
        let mut ds = Dataset::default();
        for d in demos.iter().cloned() {
            ds.ingest(d).unwrap();
        }
        for raw in &demos {
            let d = ds.get(&raw.id).unwrap();
            prop_assert_eq!(d.alignment_target(), raw.trajectory[0].pose);
            prop_assert_eq!(&d.trajectory, &resample_trajectory(&raw.trajectory, DEFAULT_SPACING).unwrap());
            prop_assert_eq!(&d.embedding, &occupancy_embedding(&d.object_cloud, ds.grid()).unwrap());
            prop_assert!(d.trajectory.len() >= 2);
        }
    }
}

/// Lowercase, drop listed words, join with single spaces.
fn strip_oracle(description: &str, stop: &[&str]) -> String {
    description
        .split_whitespace()
        .map(str::to_lowercase)
        .filter(|w| !stop.contains(&w.as_str()))
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn adjective_stripping_matches_word_filter() {
    let stop = ["the", "red", "small", "a"];
    let parser = SkillParser::with_stopwords(stop);
    for d in ["Open the red bottle", "  hang   a SMALL mug ", "pour kettle"] {
        assert_eq!(parser.parse(d).unwrap(), strip_oracle(d, &stop));
    }
    assert_eq!(parse_micro_skill("Open the red bottle").unwrap(), "open bottle");
    assert!(parse_micro_skill("   ").is_err());
}

#[test]
fn exact_mode_keeps_adjectives() {
    assert_eq!(SkillParser::exact().parse("Open  the red Bottle").unwrap(), "open the red bottle");
}
