"""HTML benchmark summary rendered with Jinja2."""

import logging
import math
from datetime import datetime
from pathlib import Path
from typing import Any

from jinja2 import Environment, FileSystemLoader, TemplateNotFound
from markupsafe import escape

from src import __version__
from src.services.metrics import BenchmarkSummary

logger = logging.getLogger(__name__)

BASE_CSS = """
body {
    font-family: -apple-system, BlinkMacSystemFont, 'Segoe UI', Roboto, sans-serif;
    font-size: 11pt;
    line-height: 1.5;
    color: #1a1a1a;
    margin: 2em;
}
h1 { color: #1f4e79; font-size: 22pt; margin: 0; }
h2 { color: #1f4e79; font-size: 15pt; border-bottom: 1px solid #e5e5e5; padding-bottom: 8px; margin-top: 30px; }
.meta { color: #666; font-size: 10pt; }
table { border-collapse: collapse; margin: 16px 0; font-size: 10pt; }
th { background: #1f4e79; color: white; text-align: left; padding: 8px; }
td { padding: 6px 8px; border-bottom: 1px solid #e5e5e5; }
tr:nth-child(even) { background: #f9fafb; }
.positive { color: #15803d; }
.negative { color: #b91c1c; }
"""


def _fmt(value, spec: str, empty: str = "-") -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return empty
    return format(value, spec)


class HtmlReportGenerator:
    """Renders benchmark summaries to a standalone HTML page."""

    def __init__(self):
        templates_dir = Path(__file__).parent.parent / "templates"
        self.jinja_env = Environment(
            loader=FileSystemLoader(str(templates_dir)),
            autoescape=True,
        )

        self.jinja_env.filters["auc"] = lambda x: _fmt(x, ".4f")
        self.jinja_env.filters["pvalue"] = lambda x: _fmt(x, ".4g")
        self.jinja_env.filters["seconds"] = lambda x: _fmt(x, ",.2f")
        self.jinja_env.filters["number"] = lambda x: _fmt(x, ",.0f", "0")
        self.jinja_env.filters["alpha"] = lambda x: _fmt(x, ".3f")

    def render(self, summary: BenchmarkSummary, data: dict[str, Any] | None = None,
               template_name: str = "benchmark_summary") -> str:
        context = {
            "title": "Benchmark summary",
            "css": BASE_CSS,
            "version": __version__,
            "generated_at": datetime.now().strftime("%Y-%m-%d %H:%M"),
            "run_id": None,
            "n_rows": 0,
            "n_failed": 0,
            **summary.to_dict(),
            **(data or {}),
        }
        try:
            template = self.jinja_env.get_template(f"{template_name}.html")
        except TemplateNotFound:
            logger.error(f"Template {template_name}.html not found; using the plain layout")
            return self._fallback_template(context)
        return template.render(**context)

    def generate(self, summary: BenchmarkSummary, output_path: str | Path,
                 data: dict[str, Any] | None = None) -> Path:
        html = self.render(summary, data)
        output_path = Path(output_path)
        output_path.write_text(html, encoding="utf-8")
        logger.info(f"Benchmark summary saved to: {output_path}")
        return output_path

    def _fallback_template(self, context: dict[str, Any]) -> str:
        rows = "".join(
            f"<tr><td>{escape(r['variant'])}</td><td>{escape(r['outcome'])}</td>"
            f"<td>{_fmt(r['median'], '.4f')}</td></tr>"
            for r in context.get("auc", [])
        )
        return f"""<!DOCTYPE html>
<html>
<head><title>{escape(context['title'])}</title></head>
<body>
<h1>{escape(context['title'])}</h1>
<p class="meta">Generated: {context['generated_at']}</p>
<table><tr><th>Variant</th><th>Outcome</th><th>Median AUC</th></tr>{rows}</table>
</body>
</html>
"""


# Singleton instance
html_report = HtmlReportGenerator()
