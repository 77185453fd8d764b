"""
PhaseGen - Report Dashboard
Renders evaluation reports as one interactive HTML page.
"""

import os
from typing import List, Optional, Sequence

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from eval_harness import MetricReport
from motion_enums import StudyKind


class ReportDashboard:
    """
    Interactive dashboard over a set of MetricReports: one panel per study
    kind present, plus a table of the scalar metrics of every report.
    """
    def __init__(self, reports: Sequence[MetricReport]):
        self.reports = list(reports)

    def _by_kind(self, kind: StudyKind) -> List[MetricReport]:
        return [r for r in self.reports if r.experiment == kind.value]

    def _recon_traces(self, fig, row: int):
        rows = []
        for report in self._by_kind(StudyKind.RECON_STUDY):
            if report.failed:
                continue
            c = report.config
            rows.append({"cell": f"f{c['f_max']}/{c['representation']}/M{c['num_phases']}",
                         "recon_mse": report.metrics["recon_mse"], "mpjpe": report.metrics["mpjpe"]})
        if rows:
            df = pd.DataFrame(rows)
            fig.add_trace(go.Bar(x=df.cell, y=df.recon_mse, name="recon MSE"), row=row, col=1)
            fig.add_trace(go.Bar(x=df.cell, y=df.mpjpe, name="MPJPE"), row=row, col=1)

    def _transition_traces(self, fig, row: int):
        for report in self._by_kind(StudyKind.TRANSITION_STUDY):
            df = report.to_frame()
            for column in df.columns.drop("frame"):
                fig.add_trace(go.Scatter(x=df.frame, y=df[column], mode="lines", name=column), row=row, col=1)

    def _guidance_traces(self, fig, row: int):
        for report in self._by_kind(StudyKind.GUIDANCE_SWEEP):
            df = report.to_frame()
            fig.add_trace(go.Scatter(x=df.guidance, y=df.round_trip_error, mode="lines+markers",
                                     name="round-trip error"), row=row, col=1)
            fig.add_trace(go.Scatter(x=df.guidance, y=df.prompt_consistency, mode="lines+markers",
                                     name="prompt consistency"), row=row, col=1)
            fig.add_trace(go.Scatter(x=df.guidance, y=df.chance_consistency, mode="lines",
                                     line={"dash": "dash"}, name="shuffled prompts"), row=row, col=1)

    def _timing_traces(self, fig, row: int):
        for report in self._by_kind(StudyKind.TIMING):
            df = report.to_frame()
            fig.add_trace(go.Scatter(x=df.length, y=df.sample_seconds, mode="lines+markers",
                                     name="sampling s"), row=row, col=1)
            fig.add_trace(go.Scatter(x=df.length, y=df.decode_seconds, mode="lines+markers",
                                     name="decoding s"), row=row, col=1)

    def summary_table(self) -> pd.DataFrame:
        records = []
        for report in self.reports:
            for name, value in report.metrics.items():
                if isinstance(value, (int, float, bool)) or value is None:
                    records.append({"experiment": report.experiment, "seed": report.seed, "metric": name,
                                    "value": value, "label": report.labels.get(name, "")})
        return pd.DataFrame(records, columns=["experiment", "seed", "metric", "value", "label"])

    def generate_dashboard(self, output_path: str, title: Optional[str] = None) -> str:
        panels = [
            (StudyKind.RECON_STUDY, "Reconstruction by encoder configuration", self._recon_traces),
            (StudyKind.TRANSITION_STUDY, "Transition distance around the switch frame", self._transition_traces),
            (StudyKind.GUIDANCE_SWEEP, "Guidance sweep", self._guidance_traces),
            (StudyKind.TIMING, "Inference time by length", self._timing_traces),
        ]
        panels = [p for p in panels if self._by_kind(p[0])]
        table = self.summary_table()
        specs = [[{"type": "xy"}] for _ in panels] + [[{"type": "table"}]]
        fig = make_subplots(rows=len(panels) + 1, cols=1, specs=specs,
                            subplot_titles=[p[1] for p in panels] + ["Scalar metrics (PROXY-labelled)"])
        for row, (_, _, draw) in enumerate(panels, start=1):
            draw(fig, row)
        fig.add_trace(go.Table(header={"values": list(table.columns)},
                               cells={"values": [table[c].astype(str).tolist() for c in table.columns]}),
                      row=len(panels) + 1, col=1)
        fig.update_layout(height=350 * (len(panels) + 1), title=title or "PhaseGen evaluation")
        directory = os.path.dirname(os.path.abspath(output_path))
        os.makedirs(directory, exist_ok=True)
        fig.write_html(output_path, include_plotlyjs="cdn")
        return output_path
