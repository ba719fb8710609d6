import xml.etree.ElementTree as ET

from surfeig.plotting import Figure, Series


def test_render_is_valid_svg(tmp_path):
    fig = Figure(title="t & <x>", xlabel="DoF", ylabel="error", logx=True, logy=True)
    fig.add(Series("a", [10, 100, 1000], [1.0, 0.1, 0.01], line=True))
    fig.add(Series("b", [10, 100], [0.0, float("nan")]))   # dropped on log axes
    fig.save(tmp_path / "f.svg")
    root = ET.parse(tmp_path / "f.svg").getroot()
    ns = "{http://www.w3.org/2000/svg}"
    assert root.tag == ns + "svg"
    assert len(root.findall(f"{ns}polyline")) == 1
    # 3 data markers + 2 legend markers
    assert len(root.findall(f"{ns}circle")) == 5


def test_empty_figure_renders():
    assert Figure().render().startswith("<svg")
