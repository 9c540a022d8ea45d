"""File-based pipeline stages with digest-checked resume.

Each stage reads and writes files under the run's output directory, and
the manifest records content digests for all of them. A stage re-runs
only when its inputs, outputs, or the config changed; deleting one
intermediate file re-runs exactly the stages downstream of it.
"""

import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from . import embedding as emb
from . import evaluation, kinematics, mlp, narrative, osm, preprocess, render, trajectory
from .config import ConfigError, PipelineConfig
from .embedding import CombineRule
from .manifest import RunManifest, config_hash
from .trajectory import Mode, TrajectorySegment


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class OutLayout:
    """Canonical file layout under one run directory."""

    out_dir: Path

    def __post_init__(self) -> None:
        self.out_dir = Path(self.out_dir)

    @property
    def segments(self) -> Path:
        return self.out_dir / "segments.jsonl"

    @property
    def reports(self) -> Path:
        return self.out_dir / "reports.jsonl"

    @property
    def scenes_dir(self) -> Path:
        return self.out_dir / "scenes"

    def scene_svg(self, segment_id: str) -> Path:
        return self.scenes_dir / f"{segment_id}.scene.svg"

    def scene_sidecar(self, segment_id: str) -> Path:
        return self.scenes_dir / f"{segment_id}.scene.json"

    def scene_png(self, segment_id: str) -> Path:
        return self.scenes_dir / f"{segment_id}.scene.png"

    @property
    def narratives(self) -> Path:
        return self.out_dir / "narratives.jsonl"

    @property
    def modalities(self) -> Path:
        return self.out_dir / "embeddings" / "modalities.jsonl"

    def combined(self, rule: CombineRule) -> Path:
        return self.out_dir / "embeddings" / f"combined_{rule.value}.jsonl"

    @property
    def checkpoint(self) -> Path:
        return self.out_dir / "model" / "checkpoint.json"

    @property
    def train_log(self) -> Path:
        return self.out_dir / "model" / "train_log.json"

    @property
    def eval_json(self) -> Path:
        return self.out_dir / "eval" / "report.json"

    @property
    def eval_txt(self) -> Path:
        return self.out_dir / "eval" / "report.txt"

    @property
    def ablation_json(self) -> Path:
        return self.out_dir / "ablation" / "report.json"

    @property
    def ablation_txt(self) -> Path:
        return self.out_dir / "ablation" / "report.txt"

    @property
    def synth_osm(self) -> Path:
        return self.out_dir / "map.osm"


class PipelineRun:
    """Shared state for a sequence of stages over one output directory."""

    def __init__(self, cfg: PipelineConfig, echo: Callable[[str], None] = lambda m: print(m)):
        self.cfg = cfg
        self.layout = OutLayout(Path(cfg.paths.out))
        self.echo = echo
        self.config_digest = config_hash(cfg.to_dict())
        self.layout.out_dir.mkdir(parents=True, exist_ok=True)
        existing = RunManifest.load(self.layout.out_dir)
        if existing is not None and existing.data.get("config_hash") == self.config_digest:
            self.manifest = existing
        else:
            self.manifest = RunManifest(self.config_digest)

    def _segments_input(self) -> Path:
        if self.cfg.paths.segments is not None:
            return Path(self.cfg.paths.segments)
        return self.layout.segments

    def _stage(self, name: str, inputs: list[Path], outputs: list[Path], body: Callable[[], Optional[dict]]) -> None:
        for path in inputs:
            if not path.exists():
                raise StageError(name, f"missing input file: {path}")
        if self.manifest.stage_fresh(name, inputs, self.config_digest):
            self.echo(f"[{name}] up to date, skipped")
            return
        try:
            counts = body()
        except StageError:
            raise
        except (ConfigError, ValueError, OSError, RuntimeError) as exc:
            raise StageError(name, str(exc)) from exc
        self.manifest.record_stage(name, inputs, outputs)
        if counts:
            self.manifest.set_counts(counts)
        self.manifest.save(self.layout.out_dir)
        self.echo(f"[{name}] done")

    # ------------------------------------------------------------- stages

    def synth(self, spec) -> None:
        from .synth import generate_corpus

        def body() -> dict:
            segments, osm_xml = generate_corpus(spec)
            trajectory.write_segments(self.layout.segments, segments)
            self.layout.synth_osm.write_text(osm_xml, encoding="utf-8")
            return {"synth_segments": _mode_counts(segments)}

        self._stage("synth", [], [self.layout.segments, self.layout.synth_osm], body)

    def ingest(self) -> None:
        root = self.cfg.paths.geolife_root
        if root is None:
            raise StageError("ingest", "config has no paths.geolife_root")
        data_dir = Path(root) / "Data"
        if not data_dir.is_dir():
            raise StageError("ingest", f"GeoLife layout not found under {root} (no Data/)")

        def body() -> dict:
            all_segments: list[TrajectorySegment] = []
            labeled_users = 0
            for user_dir in sorted(data_dir.iterdir()):
                if not user_dir.is_dir():
                    continue
                labels_path = user_dir / "labels.txt"
                if not labels_path.exists():
                    self.manifest.add_warning(f"user {user_dir.name} has no labels.txt, skipped")
                    continue
                labeled_users += 1
                labels = trajectory.parse_labels(labels_path.read_bytes())
                points = []
                for plt in sorted((user_dir / "Trajectory").glob("*.plt")):
                    points.extend(trajectory.parse_plt(plt.read_bytes()))
                cleaned = preprocess.clean(points, self.cfg.cleaning)
                all_segments.extend(
                    preprocess.segment_by_labels(
                        cleaned, labels, self.cfg.cleaning, id_prefix=f"u{user_dir.name}"
                    )
                )
            if labeled_users == 0:
                raise StageError("ingest", f"no user under {data_dir} has a labels.txt")
            trajectory.write_segments(self.layout.segments, all_segments)
            return {"ingested_segments": _mode_counts(all_segments)}

        inputs = sorted(
            p for user in data_dir.iterdir() if user.is_dir()
            for p in [user / "labels.txt", *(user / "Trajectory").glob("*.plt")]
            if p.exists()
        )
        self._stage("ingest", inputs, [self.layout.segments], body)

    def features(self) -> None:
        seg_path = self._segments_input()

        def body() -> dict:
            segments = trajectory.read_segments(seg_path)
            reports = [kinematics.analyze(seg, self.cfg.kinematics) for seg in segments]
            kinematics.write_reports(self.layout.reports, reports)
            return {"reports": len(reports)}

        self._stage("features", [seg_path], [self.layout.reports], body)

    def _load_osm(self):
        path = self.cfg.paths.osm
        if path is None and self.layout.synth_osm.exists():
            path = str(self.layout.synth_osm)
        if path is None:
            return None, []
        return osm.parse_osm_xml(Path(path).read_bytes()), [Path(path)]

    def render(self) -> None:
        seg_path = self._segments_input()
        extract, osm_inputs = self._load_osm()
        segments = trajectory.read_segments(seg_path) if seg_path.exists() else []
        style = render.SceneStyle(version=self.cfg.render.style_version)

        outputs: list[Path] = []
        for seg in segments:
            outputs.append(self.layout.scene_svg(seg.segment_id))
            outputs.append(self.layout.scene_sidecar(seg.segment_id))
            if self.cfg.render.raster:
                outputs.append(self.layout.scene_png(seg.segment_id))

        def body() -> dict:
            self.layout.scenes_dir.mkdir(parents=True, exist_ok=True)
            for seg in segments:
                bbox = render.scene_bbox(seg, self.cfg.render.buffer_frac)
                layers = (
                    render.extract_layers(extract, bbox)
                    if extract is not None
                    else render.SceneLayers(roads=(), subway_lines=(), bus_stations=())
                )
                scene = render.render_scene(
                    seg, layers, bbox, style, self.cfg.render.max_px, raster=self.cfg.render.raster
                )
                self.layout.scene_svg(seg.segment_id).write_text(scene.vector_doc, encoding="utf-8")
                with open(self.layout.scene_sidecar(seg.segment_id), "w", encoding="utf-8") as fh:
                    json.dump(render.scene_sidecar(scene), fh, separators=(",", ":"))
                    fh.write("\n")
                if scene.raster is not None:
                    self.layout.scene_png(seg.segment_id).write_bytes(scene.raster)
            return {"scenes": len(segments)}

        self._stage("render", [seg_path, *osm_inputs], outputs, body)

    def narrate(self) -> None:
        def body() -> dict:
            reports = kinematics.read_reports(self.layout.reports)
            items: list[tuple[str, narrative.SceneText]] = []
            if self.cfg.narrative.source == "deterministic":
                for report in reports:
                    items.append(
                        (
                            report.segment_id,
                            narrative.render_narrative(
                                report, local_utc_offset_h=self.cfg.kinematics.local_utc_offset_h
                            ),
                        )
                    )
            else:
                client = self._reasoner_client()
                segments = {s.segment_id: s for s in trajectory.read_segments(self._segments_input())}
                for report in reports:
                    prompt = narrative.build_prompt(
                        segments[report.segment_id], self.cfg.narrative.point_cap
                    )
                    text, warning = narrative.remote_narrative(prompt, client)
                    if warning:
                        self.manifest.add_warning(f"{report.segment_id}: {warning}")
                    items.append((report.segment_id, text))
            narrative.write_narratives(self.layout.narratives, items)
            return {"narratives": len(items)}

        inputs = [self.layout.reports]
        if self.cfg.narrative.source == "remote":
            inputs.append(self._segments_input())
        self._stage("narrate", inputs, [self.layout.narratives], body)

    def _reasoner_client(self):
        from .remote import HttpReasonerClient

        r = self.cfg.remote
        return HttpReasonerClient(
            r.reasoner_endpoint,
            model_id=r.reasoner_model,
            token_env=r.token_env,
            timeout_s=r.timeout_s,
            retries=r.retries,
            requests_per_minute=r.requests_per_minute,
        )

    def _embed_client(self):
        from .remote import HttpEmbedClient

        r = self.cfg.remote
        return HttpEmbedClient(
            r.embed_endpoint,
            model_id=r.embed_model,
            token_env=r.token_env,
            timeout_s=r.timeout_s,
            retries=r.retries,
            requests_per_minute=r.requests_per_minute,
            dim=r.embed_dim,
        )

    def embed(self) -> None:
        seg_path = self._segments_input()
        extract, osm_inputs = self._load_osm()
        segments = trajectory.read_segments(seg_path) if seg_path.exists() else []
        scene_inputs = [self.layout.scene_svg(s.segment_id) for s in segments]
        scene_inputs += [self.layout.scene_sidecar(s.segment_id) for s in segments]

        def body() -> dict:
            texts = dict(narrative.read_narratives(self.layout.narratives))
            records = []
            e = self.cfg.embedding
            remote_client = self._embed_client() if e.backend == "remote" else None
            for seg in segments:
                sidecar_path = self.layout.scene_sidecar(seg.segment_id)
                if not sidecar_path.exists():
                    raise StageError("embed", f"missing scene sidecar for {seg.segment_id}")
                sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
                vector_doc = self.layout.scene_svg(seg.segment_id).read_text(encoding="utf-8")
                scene = render.scene_from_sidecar(sidecar, vector_doc)
                bbox = scene.bbox
                layers = (
                    render.extract_layers(extract, bbox)
                    if extract is not None
                    else render.SceneLayers(roads=(), subway_lines=(), bus_stations=())
                )
                text = texts.get(seg.segment_id)
                if text is None:
                    raise StageError("embed", f"no narrative for segment {seg.segment_id}")
                if remote_client is None:
                    image_emb = emb.embed_image_offline(scene, layers, e.dim, e.seed)
                    text_emb = emb.embed_text_offline(text, e.dim, e.seed, segment_id=seg.segment_id)
                else:
                    png = self.layout.scene_png(seg.segment_id)
                    payload = png.read_bytes() if png.exists() else scene.vector_doc
                    image_emb = emb.embed_remote(payload, remote_client, emb.Modality.IMAGE, seg.segment_id)
                    text_emb = emb.embed_remote(
                        text.full_text, remote_client, emb.Modality.TEXT, seg.segment_id
                    )
                records.append(emb.modality_to_record(image_emb))
                records.append(emb.modality_to_record(text_emb))
            self.layout.modalities.parent.mkdir(parents=True, exist_ok=True)
            emb.write_records(self.layout.modalities, records)
            return {"modality_embeddings": len(records)}

        self._stage(
            "embed",
            [seg_path, self.layout.narratives, *scene_inputs, *osm_inputs],
            [self.layout.modalities],
            body,
        )

    def combine(self, rules: Optional[list[CombineRule]] = None) -> None:
        if rules is None:
            rules = [self.cfg.embedding.rule]
        seg_path = self._segments_input()

        def body() -> dict:
            segments = {s.segment_id: s for s in trajectory.read_segments(seg_path)}
            by_segment: dict[str, dict] = {}
            for rec in emb.read_records(self.layout.modalities):
                modality = emb.record_to_modality(rec)
                by_segment.setdefault(modality.segment_id, {})[modality.modality] = modality
            for rule in rules:
                records = []
                for segment_id in sorted(by_segment):
                    pair = by_segment[segment_id]
                    seg = segments.get(segment_id)
                    combined = emb.combine(
                        pair.get(emb.Modality.IMAGE),
                        pair.get(emb.Modality.TEXT),
                        rule,
                        mode_label=seg.mode if seg is not None else None,
                    )
                    records.append(emb.scene_to_record(combined))
                emb.write_records(self.layout.combined(rule), records)
            return {"combined_rules": [r.value for r in rules]}

        self._stage(
            f"combine[{'+'.join(r.value for r in rules)}]",
            [self.layout.modalities, seg_path],
            [self.layout.combined(rule) for rule in rules],
            body,
        )

    def train(self) -> None:
        rule = self.cfg.embedding.rule
        combined_path = self.layout.combined(rule)

        def body() -> dict:
            dataset = _labeled_dataset(combined_path)
            model, log = mlp.train(dataset, self.cfg.train)
            self.layout.checkpoint.parent.mkdir(parents=True, exist_ok=True)
            meta = {
                "combine_rule": rule.value,
                "embedding_dim": self.cfg.embedding.dim,
                "embedding_seed": self.cfg.embedding.seed,
                "embedding_backend": self.cfg.embedding.backend,
            }
            mlp.save_checkpoint(model, self.layout.checkpoint, meta=meta)
            with open(self.layout.train_log, "w", encoding="utf-8") as fh:
                json.dump(log.to_dict(), fh, separators=(",", ":"))
                fh.write("\n")
            return {"train_segments": len(log.train_ids)}

        self._stage(
            "train", [combined_path], [self.layout.checkpoint, self.layout.train_log], body
        )

    def evaluate(self) -> None:
        rule = self.cfg.embedding.rule
        combined_path = self.layout.combined(rule)

        def body() -> dict:
            model, _meta = mlp.load_checkpoint(self.layout.checkpoint)
            with open(self.layout.train_log, encoding="utf-8") as fh:
                log = json.load(fh)
            test_ids = set(log["test_ids"])
            dataset = [item for item in _labeled_dataset(combined_path) if item[0].segment_id in test_ids]
            report = evaluation.evaluate(model, dataset)
            self.layout.eval_json.parent.mkdir(parents=True, exist_ok=True)
            evaluation.write_report(self.layout.eval_json, report)
            self.layout.eval_txt.write_text(
                evaluation.format_table({rule.value: report}), encoding="utf-8"
            )
            return {"test_segments": len(dataset)}

        self._stage(
            "evaluate",
            [combined_path, self.layout.checkpoint, self.layout.train_log],
            [self.layout.eval_json, self.layout.eval_txt],
            body,
        )

    def ablate(self) -> None:
        rules = list(evaluation.ABLATION_RULES)
        self.combine(rules)
        inputs = [self.layout.combined(rule) for rule in rules]

        def body() -> dict:
            variants = {
                rule: [emb.record_to_scene(r) for r in emb.read_records(self.layout.combined(rule))]
                for rule in rules
            }
            result = evaluation.run_ablation(variants, self.cfg.train)
            self.layout.ablation_json.parent.mkdir(parents=True, exist_ok=True)
            with open(self.layout.ablation_json, "w", encoding="utf-8") as fh:
                json.dump(result.to_dict(), fh, separators=(",", ":"))
                fh.write("\n")
            self.layout.ablation_txt.write_text(
                evaluation.format_table(
                    {rule.value: rep for rule, rep in result.reports.items()}
                ),
                encoding="utf-8",
            )
            return {"ablation_test_segments": len(result.test_ids)}

        self._stage("ablate", inputs, [self.layout.ablation_json, self.layout.ablation_txt], body)

    def pipeline(self) -> None:
        """features -> render -> narrate -> embed -> combine -> train -> evaluate."""
        self.cfg.validate_remote_ready()
        self.features()
        self.render()
        self.narrate()
        self.embed()
        self.combine()
        self.train()
        self.evaluate()


def _mode_counts(segments: list[TrajectorySegment]) -> dict:
    counts: dict[str, int] = {}
    for seg in segments:
        key = seg.mode.value if seg.mode is not None else "unlabeled"
        counts[key] = counts.get(key, 0) + 1
    return counts


def _labeled_dataset(combined_path: Path) -> list[tuple[emb.SceneEmbedding, Mode]]:
    dataset = []
    for rec in emb.read_records(combined_path):
        scene = emb.record_to_scene(rec)
        if scene.mode_label is None:
            continue
        dataset.append((scene, scene.mode_label))
    return dataset
