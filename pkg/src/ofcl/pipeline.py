"""End-to-end run orchestration.

For each episode in order: train the task (which folds its spheres into the
knowledge space, promoting overlapped pseudo spheres), evaluate on the
cumulative test sets, then cluster the detect-flagged unknowns into fresh
pseudo spheres. All artifacts land in the output directory; identical
configurations produce byte-identical artifacts.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .boundaries import detect_batch, openness_scores
from .config import RunConfig
from .errors import UsageError
from .features import augmented_feature, extract_batch
from .geometry import seeded_rng
from .knowledge import (
    absorb_unknowns,
    cluster_unknowns,
    dump_knowledge,
    render_label,
)
from .metrics import (
    MetricsReport,
    PredictionRecord,
    aggregate,
    render_report,
    render_prediction,
    write_records,
)
from .stream import generate, read_stream
from .training import TrainerState, init_state, train_task

LOSS_HEADER = "task,epoch,margin_loss,aug_loss,total"

# stream tag for the fixed 2-D projection used by the plot-data emitter
_PROJECTION_STREAM = 5


@dataclass
class PassData:
    """Everything one evaluation pass produced."""

    task: int
    records: list
    embeddings: np.ndarray
    true_labels: np.ndarray
    classifier_accuracy: float


@dataclass
class RunResult:
    config: RunConfig
    episodes: list
    state: TrainerState
    passes: list
    loss_rows: list
    report: MetricsReport
    promotions: dict
    pseudo_members: dict = field(default_factory=dict)
    out_dir: str | None = None


def evaluate_pass(state: TrainerState, episodes, trained: set, eval_task: int) -> PassData:
    """Detect and classify every cumulative test sample after a task."""
    raw = []
    tasks = []
    labels = []
    for ep in episodes:
        for vec, cid in ep.test:
            raw.append(vec)
            tasks.append(ep.task_index)
            labels.append(cid)
    embeddings = extract_batch(state.backbone, np.stack(raw))
    labels = np.array(labels)

    detections = state.space.classify_batch(embeddings)
    known = state.space.known_spheres()
    closed = detect_batch(known, embeddings)
    scores = openness_scores(known, embeddings)

    records = []
    for i in range(embeddings.shape[0]):
        records.append(
            PredictionRecord(
                task=tasks[i],
                true_label=int(labels[i]),
                is_open=int(labels[i]) not in trained,
                predicted=detections[i].label,
                closed_predicted=closed[i].nearest_label,
                score=float(scores[i]),
            )
        )

    clf_acc = _classifier_accuracy(state, embeddings, labels, trained)
    return PassData(eval_task, records, embeddings, labels, clf_acc)


def _classifier_accuracy(state: TrainerState, embeddings, labels, trained) -> float:
    """Diagnostic only: the linear head's accuracy on the known samples,
    with test-time token selection over the whole bank (no count updates)."""
    k = state.token_cfg.select_k
    known_idx = [i for i in range(embeddings.shape[0]) if int(labels[i]) in trained]
    if not known_idx:
        return float("nan")
    subset = embeddings[known_idx]
    selected = state.bank.select_batch(subset, k, scope_task=None)
    feats = np.stack(
        [
            augmented_feature(subset[j], [state.bank.tokens[s].values for s in selected[j]], k)
            for j in range(len(known_idx))
        ]
    )
    predictions = state.classifier.predict(feats)
    correct = sum(
        predictions[j] == int(labels[i]) for j, i in enumerate(known_idx)
    )
    return correct / len(known_idx)


def run(config: RunConfig, out_dir: str | None = None) -> RunResult:
    """Execute the full stream; optionally write all artifacts to ``out_dir``."""
    if config.episodes:
        episodes = read_stream(config.episodes)
    else:
        episodes = generate(config.stream_spec())
    if not episodes:
        raise UsageError("the stream holds no episodes")

    state = init_state(
        config.backbone(),
        config.train_config(),
        config.margin_config(),
        config.token_config(),
    )
    cluster_params = config.cluster_params()

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    trained: set = set()
    passes: list[PassData] = []
    loss_rows: list[tuple] = []
    pseudo_members: dict = {}

    for t, episode in enumerate(episodes):
        trace = train_task(state, episode)
        loss_rows.extend(trace)
        trained.update(episode.train_class_ids)

        pass_data = evaluate_pass(state, episodes[: t + 1], trained, episode.task_index)
        passes.append(pass_data)

        unknown_idx = [i for i, r in enumerate(pass_data.records) if r.predicted is None]
        points = pass_data.embeddings[unknown_idx]
        truths = pass_data.true_labels[unknown_idx]
        groups, _noise = cluster_unknowns(points, cluster_params)
        created = absorb_unknowns(
            state.space, groups, points, episode.task_index, state.margin_cfg
        )
        for sphere, group in zip(created, groups):
            pseudo_members[sphere.label] = (points[list(group)], truths[list(group)])

        if out_dir:
            ti = episode.task_index
            write_records(
                os.path.join(out_dir, f"records_task_{ti:03d}.csv"), pass_data.records
            )
            write_records(
                os.path.join(out_dir, f"records_closed_task_{ti:03d}.csv"),
                pass_data.records,
                closed=True,
            )
            dump_knowledge(state.space, os.path.join(out_dir, f"knowledge_task_{ti:03d}.txt"))
            state.bank.dump(os.path.join(out_dir, f"tokens_task_{ti:03d}.txt"))

    promotions = state.space.promotion_map()
    report = aggregate(
        [p.records for p in passes],
        mode="closed",
        promotions=promotions,
        tpr_target=config.tpr_target,
    )

    if out_dir:
        with open(os.path.join(out_dir, "losses.csv"), "w", newline="\n") as fh:
            fh.write(LOSS_HEADER + "\n")
            for row in loss_rows:
                fh.write(f"{row[0]},{row[1]},{repr(row[2])},{repr(row[3])},{repr(row[4])}\n")
        with open(os.path.join(out_dir, "report.txt"), "w", newline="\n") as fh:
            fh.write(render_report(report))
        with open(os.path.join(out_dir, "diagnostics.txt"), "w", newline="\n") as fh:
            for p in passes:
                fh.write(f"task {p.task} classifier_accuracy {repr(p.classifier_accuracy)}\n")
        dump_knowledge(state.space, os.path.join(out_dir, "knowledge_final.txt"))
        state.bank.dump(os.path.join(out_dir, "tokens_final.txt"))
        _write_projection(os.path.join(out_dir, "projection_2d.csv"), config, passes[-1])

    return RunResult(
        config=config,
        episodes=episodes,
        state=state,
        passes=passes,
        loss_rows=loss_rows,
        report=report,
        promotions=promotions,
        pseudo_members=pseudo_members,
        out_dir=out_dir,
    )


def _write_projection(path, config: RunConfig, final_pass: PassData) -> None:
    """Raw 2-D coordinates of the final pass's embeddings under a fixed
    random linear projection; rendering is external."""
    dim = final_pass.embeddings.shape[1]
    proj = seeded_rng(config.seed, _PROJECTION_STREAM).normal(size=(dim, 2)) / np.sqrt(dim)
    coords = final_pass.embeddings @ proj
    with open(path, "w", newline="\n") as fh:
        fh.write("task,true,predicted,x,y\n")
        for rec, (x, y) in zip(final_pass.records, coords):
            fh.write(
                f"{rec.task},{render_label(rec.true_label)},"
                f"{render_prediction(rec.predicted)},{repr(float(x))},{repr(float(y))}\n"
            )
