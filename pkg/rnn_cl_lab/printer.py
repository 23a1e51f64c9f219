from typing import Any

from rich.console import Console, Group
from rich.live import Live
from rich.spinner import Spinner
from rich.text import Text


class Printer:
    """Live status lines keyed by id: a spinner while running, a checkmark when done."""

    def __init__(self, console: Console | None = None):
        self.live = Live(console=console or Console(stderr=True), refresh_per_second=8)
        self.items: dict[str, tuple[str, bool]] = {}
        self.hide_done_ids: set[str] = set()
        self.live.start()

    def __enter__(self) -> "Printer":
        return self

    def __exit__(self, *exc) -> None:
        self.end()

    def end(self) -> None:
        self.live.stop()

    def update_item(
        self, item_id: str, content: str, is_done: bool = False, hide_checkmark: bool = False
    ) -> None:
        self.items[item_id] = (content, is_done)
        if hide_checkmark:
            self.hide_done_ids.add(item_id)
        self.flush()

    def mark_item_done(self, item_id: str, content: str | None = None) -> None:
        text = self.items[item_id][0] if content is None else content
        self.items[item_id] = (text, True)
        self.flush()

    def flush(self) -> None:
        renderables: list[Any] = []
        for item_id, (content, is_done) in self.items.items():
            if not is_done:
                renderables.append(Spinner("dots", text=content))
            elif item_id in self.hide_done_ids:
                renderables.append(Text(content))
            else:
                renderables.append(Text.assemble(("✓ ", "green"), content))
        self.live.update(Group(*renderables))
