"""graph analyze: Laplacian structure and OFP radius."""

import logging

from app.commands import EXIT_OK, input_path, out_dir
from app.models.schemas import GraphSpec
from app.services import codec, plots
from app.services.signed_graph import analyze as analyze_graph

logger = logging.getLogger(__name__)


def analyze(args) -> int:
    g = codec.graph_from_spec(codec.parse_file(input_path(args), GraphSpec))
    analysis = analyze_graph(g)

    out = out_dir(args)
    codec.write_json(out / "graph_analysis.json", codec.analysis_to_out(analysis))
    if args.plot:
        plots.save_png(out / "graph.png", plots.render_graph(g))
    return EXIT_OK
