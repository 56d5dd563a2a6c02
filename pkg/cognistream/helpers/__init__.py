from cognistream.helpers.validators import (
    miner_config_checker,
    relevancy_config_checker,
    hypothesis_config_checker,
    structure_mode_checker,
    forecast_method_checker,
    topology_shape_checker,
    source_tag_checker
)
from cognistream.helpers.codecs import (
    content_hash,
    literal_item,
    is_literal,
    literal_byte,
    format_score,
    tsv_line,
    render_lines,
    write_lines,
    read_lines
)
