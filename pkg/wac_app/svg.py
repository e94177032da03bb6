"""Minimal SVG text builder; output depends only on the calls made."""
from typing import Dict, Sequence, Tuple
from xml.sax.saxutils import escape

__all__ = ['SVG']


def _num(value: float) -> str:
    return f'{value:.2f}'


class SVG:

    def __init__(self) -> None:
        self.svg = ''

    def header(self, width: float, height: float) -> None:
        self.svg += (
            '<?xml version="1.0" standalone="no"?>\n'
            f'<svg version="1.1" width="{_num(width)}" height="{_num(height)}" '
            f'viewBox="0 0 {_num(width)} {_num(height)}" '
            'xmlns="http://www.w3.org/2000/svg">\n')

    def group_start(self, attr: Dict[str, str]) -> None:
        g_attr = [f'{key}="{escape(value)}"' for key, value in attr.items()
                  if key in ('id', 'class')]
        self.svg += f'<g {" ".join(g_attr)}>\n'
        if 'title' in attr:
            self.svg += f'<title>{escape(attr["title"])}</title>\n'

    def group_end(self) -> None:
        self.svg += '</g>\n'

    def filled_rectangle(self, x1: float, y1: float, x2: float, y2: float,
                         fill: str, extra: str = '') -> None:
        self.svg += (
            f'<rect x="{_num(x1)}" y="{_num(y1)}" width="{_num(x2 - x1)}" '
            f'height="{_num(y2 - y1)}" fill="{fill}" {extra}/>\n')

    def line(self, x1: float, y1: float, x2: float, y2: float,
             stroke: str = '#000', extra: str = '') -> None:
        self.svg += (
            f'<line x1="{_num(x1)}" y1="{_num(y1)}" x2="{_num(x2)}" '
            f'y2="{_num(y2)}" stroke="{stroke}" {extra}/>\n')

    def polyline(self, points: Sequence[Tuple[float, float]], stroke: str,
                 extra: str = '') -> None:
        coords = ' '.join(f'{_num(x)},{_num(y)}' for x, y in points)
        self.svg += (f'<polyline points="{coords}" fill="none" '
                     f'stroke="{stroke}" {extra}/>\n')

    def polygon(self, points: Sequence[Tuple[float, float]], fill: str,
                extra: str = '') -> None:
        coords = ' '.join(f'{_num(x)},{_num(y)}' for x, y in points)
        self.svg += f'<polygon points="{coords}" fill="{fill}" {extra}/>\n'

    def text(self, x: float, y: float, string: str, extra: str = '') -> None:
        self.svg += (f'<text x="{_num(x)}" y="{_num(y)}" {extra}>'
                     f'{escape(string)}</text>\n')

    def get_svg(self) -> str:
        return f'{self.svg}</svg>\n'

    def write(self, path: str) -> None:
        with open(path, 'w') as file:
            file.write(self.get_svg())
