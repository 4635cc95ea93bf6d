"""Built-in app templates and hand-designed reference layouts.

Two small mobile apps drive everything downstream: a photo editor (the richer
one, used for training data) and a recipe browser (used to probe transfer to
an unseen app). The hand-built good/bad photo layouts anchor sanity checks:
good ones follow ordinary mobile design practice, bad ones scatter tiny
controls across the screen.
"""

from __future__ import annotations

from .layout import (
    ContainerSpec,
    ElementSpec,
    GroupContainer,
    Layout,
    LayoutTemplate,
    Rect,
    ScreenSpec,
    UiElement,
    apply_reflow,
    aspect_height,
)

_STICKERS = ("star", "heart", "smile", "sun", "moon", "tree")
_INGREDIENTS = ("bread", "rice", "apple", "banana", "carrot", "pea")


def photo_template(screen: ScreenSpec = None) -> LayoutTemplate:
    screen = screen or ScreenSpec()
    sticker_members = [
        ElementSpec(f"sticker-{name}", "icon-group-member", name,
                    (0.0, 0.0), aspect_ratio=1.0)
        for name in _STICKERS
    ]
    tab_members = [
        ElementSpec(f"tab-{name.lower()}", "button-group-member", name,
                    (0.0, 0.0), h_range=(0.0, 0.0), label_salience=len(name))
        for name in ("Text", "Emoji", "Filter")
    ]
    action_members = [
        ElementSpec("save-btn", "button-group-member", "Save",
                    (0.0, 0.0), h_range=(0.0, 0.0), label_salience=4),
        ElementSpec("cancel-btn", "button-group-member", "Cancel",
                    (0.0, 0.0), h_range=(0.0, 0.0), label_salience=6),
    ]
    items = [
        ElementSpec("photo", "static-div", "photo",
                    (0.40, 0.70), h_range=(0.28, 0.45)),
        ElementSpec("drop-a", "drop-target", "zone",
                    (0.08, 0.14), h_range=(0.07, 0.12), host_id="photo"),
        ElementSpec("drop-b", "drop-target", "zone",
                    (0.08, 0.14), h_range=(0.07, 0.12), host_id="photo"),
        ElementSpec("drop-c", "drop-target", "zone",
                    (0.08, 0.14), h_range=(0.07, 0.12), host_id="photo"),
        ContainerSpec("sticker-tray", "icon-group-container", sticker_members,
                      w_range=(0.25, 0.50), h_range=(0.10, 0.22)),
        ContainerSpec("mode-tabs", "button-group-container", tab_members,
                      w_range=(0.25, 0.50), h_range=(0.06, 0.12)),
        ContainerSpec("action-bar", "button-group-container", action_members,
                      w_range=(0.14, 0.32), h_range=(0.06, 0.14)),
        ElementSpec("brightness-slider", "slider", "brightness",
                    (0.30, 0.60), h_range=(0.035, 0.07),
                    orientations=("horizontal", "vertical"), label_salience=10),
        ElementSpec("undo-btn", "icon", "undo", (0.06, 0.14), aspect_ratio=1.0),
        ElementSpec("upload-btn", "icon", "upload", (0.06, 0.14), aspect_ratio=1.0),
    ]
    return LayoutTemplate(
        name="photo", screen=screen, items=items,
        severe_ids=("save-btn", "cancel-btn"),
    )


def recipe_template(screen: ScreenSpec = None) -> LayoutTemplate:
    screen = screen or ScreenSpec()
    ingredient_members = [
        ElementSpec(f"ingredient-{name}", "icon-group-member", name,
                    (0.0, 0.0), aspect_ratio=1.0)
        for name in _INGREDIENTS
    ]
    tab_members = [
        ElementSpec(f"tab-{name.lower()}", "button-group-member", name,
                    (0.0, 0.0), h_range=(0.0, 0.0), label_salience=len(name))
        for name in ("Grains", "Fruits", "Veggies")
    ]
    recipe_members = [
        ElementSpec("get-recipe-btn", "button-group-member", "recipe",
                    (0.0, 0.0), h_range=(0.0, 0.0), label_salience=10),
    ]
    items = [
        ContainerSpec("ingredient-tray", "icon-group-container", ingredient_members,
                      w_range=(0.30, 0.55), h_range=(0.14, 0.28)),
        ContainerSpec("category-tabs", "button-group-container", tab_members,
                      w_range=(0.25, 0.50), h_range=(0.06, 0.12)),
        ContainerSpec("recipe-bar", "button-group-container", recipe_members,
                      w_range=(0.18, 0.34), h_range=(0.06, 0.12)),
        ElementSpec("like-bin", "drop-target", "like",
                    (0.12, 0.22), h_range=(0.10, 0.18)),
        ElementSpec("dislike-bin", "drop-target", "dislike",
                    (0.12, 0.22), h_range=(0.10, 0.18)),
        ElementSpec("undo-btn", "icon", "undo", (0.06, 0.14), aspect_ratio=1.0),
        ElementSpec("back-btn", "icon", "back", (0.06, 0.14), aspect_ratio=1.0),
    ]
    return LayoutTemplate(
        name="recipe", screen=screen, items=items,
        severe_ids=("get-recipe-btn",),
    )


TEMPLATES = {"photo": photo_template, "recipe": recipe_template}


# ---------------------------------------------------------------------------
# Hand-built reference layouts (photo app)


def _photo_layout(screen: ScreenSpec, placements: dict) -> Layout:
    """Materialize the photo template with explicit rects.

    ``placements`` maps ids to (cx, cy, w, h); aspect-constrained icons pass
    h=None and get it derived. Group members are reflowed from the container.
    """
    tmpl = photo_template(screen)
    layout = Layout(screen=screen)
    for item in tmpl.items:
        if isinstance(item, ContainerSpec):
            cx, cy, w, h = placements[item.id]
            cont = GroupContainer(id=item.id, kind=item.kind,
                                  rect=Rect(cx, cy, w, h),
                                  member_ids=[m.id for m in item.members])
            layout.containers.append(cont)
            for m in item.members:
                layout.elements.append(UiElement(
                    id=m.id, kind=m.kind, label=m.label,
                    rect=Rect(cx, cy, 1e-2, 1e-2), container_id=item.id,
                    aspect_ratio=m.aspect_ratio, label_salience=m.label_salience,
                ))
        else:
            cx, cy, w, h = placements[item.id]
            if item.aspect_ratio is not None:
                h = aspect_height(w, item.aspect_ratio, screen)
            orientation = "none"
            if item.id == "brightness-slider":
                orientation = "horizontal" if w >= h else "vertical"
            layout.elements.append(UiElement(
                id=item.id, kind=item.kind, label=item.label,
                rect=Rect(cx, cy, w, h), orientation=orientation,
                container_id=item.host_id, aspect_ratio=item.aspect_ratio,
                label_salience=item.label_salience,
            ))
    apply_reflow(layout)
    return layout


def good_photo_layouts(screen: ScreenSpec = None) -> list:
    """Five conventional photo-editor designs: photo on top, controls in
    comfortable rows beneath, commit actions pinned to an edge."""
    screen = screen or ScreenSpec()
    base = {
        "photo": (0.50, 0.320, 0.88, 0.42),
        "drop-a": (0.22, 0.320, 0.14, 0.10),
        "drop-b": (0.50, 0.320, 0.14, 0.10),
        "drop-c": (0.78, 0.320, 0.14, 0.10),
        "mode-tabs": (0.50, 0.585, 0.80, 0.070),
        "sticker-tray": (0.50, 0.690, 0.80, 0.105),
        "brightness-slider": (0.50, 0.785, 0.70, 0.060),
        "action-bar": (0.50, 0.880, 0.56, 0.090),
        "undo-btn": (0.08, 0.045, 0.11, None),
        "upload-btn": (0.92, 0.045, 0.11, None),
    }
    swapped = dict(base)
    swapped["sticker-tray"] = (0.50, 0.5875, 0.80, 0.105)
    swapped["mode-tabs"] = (0.50, 0.6925, 0.80, 0.070)

    slider_first = dict(base)
    slider_first["brightness-slider"] = (0.50, 0.570, 0.70, 0.060)
    slider_first["mode-tabs"] = (0.50, 0.650, 0.80, 0.070)
    slider_first["sticker-tray"] = (0.50, 0.755, 0.80, 0.105)

    big_photo = {
        "photo": (0.50, 0.340, 0.92, 0.46),
        "drop-a": (0.21, 0.340, 0.15, 0.11),
        "drop-b": (0.50, 0.340, 0.15, 0.11),
        "drop-c": (0.79, 0.340, 0.15, 0.11),
        "mode-tabs": (0.50, 0.620, 0.82, 0.065),
        "sticker-tray": (0.50, 0.715, 0.82, 0.095),
        "brightness-slider": (0.50, 0.800, 0.72, 0.055),
        "action-bar": (0.50, 0.890, 0.60, 0.085),
        "undo-btn": (0.075, 0.042, 0.11, None),
        "upload-btn": (0.925, 0.042, 0.11, None),
    }
    side_actions = {
        "photo": (0.44, 0.320, 0.76, 0.42),
        "drop-a": (0.24, 0.320, 0.13, 0.10),
        "drop-b": (0.44, 0.320, 0.13, 0.10),
        "drop-c": (0.64, 0.320, 0.13, 0.10),
        "mode-tabs": (0.44, 0.585, 0.72, 0.070),
        "sticker-tray": (0.44, 0.690, 0.72, 0.105),
        "brightness-slider": (0.44, 0.785, 0.62, 0.060),
        "action-bar": (0.895, 0.870, 0.17, 0.160),
        "undo-btn": (0.08, 0.045, 0.11, None),
        "upload-btn": (0.92, 0.045, 0.11, None),
    }
    return [
        _photo_layout(screen, base),
        _photo_layout(screen, swapped),
        _photo_layout(screen, slider_first),
        _photo_layout(screen, big_photo),
        _photo_layout(screen, side_actions),
    ]


def bad_photo_layouts(screen: ScreenSpec = None) -> list:
    """Three deliberately poor designs: tiny targets, long travel, controls
    crammed into corners. Feasible (no overlap, in bounds) but slow."""
    screen = screen or ScreenSpec()
    scattered = {
        "photo": (0.28, 0.22, 0.34, 0.20),
        "drop-a": (0.17, 0.19, 0.07, 0.05),
        "drop-b": (0.28, 0.27, 0.07, 0.05),
        "drop-c": (0.39, 0.19, 0.07, 0.05),
        "mode-tabs": (0.84, 0.045, 0.28, 0.045),
        "sticker-tray": (0.18, 0.95, 0.20, 0.055),
        "brightness-slider": (0.965, 0.50, 0.028, 0.34),
        "action-bar": (0.10, 0.62, 0.13, 0.040),
        "undo-btn": (0.035, 0.035, 0.045, None),
        "upload-btn": (0.62, 0.93, 0.045, None),
    }
    crammed = {
        "photo": (0.50, 0.25, 0.30, 0.18),
        "drop-a": (0.42, 0.22, 0.06, 0.045),
        "drop-b": (0.50, 0.29, 0.06, 0.045),
        "drop-c": (0.58, 0.22, 0.06, 0.045),
        "mode-tabs": (0.86, 0.905, 0.24, 0.042),
        "sticker-tray": (0.86, 0.965, 0.25, 0.055),
        "brightness-slider": (0.86, 0.845, 0.24, 0.028),
        "action-bar": (0.62, 0.965, 0.16, 0.048),
        "undo-btn": (0.55, 0.905, 0.04, None),
        "upload-btn": (0.64, 0.905, 0.04, None),
    }
    far_corners = {
        "photo": (0.50, 0.50, 0.30, 0.20),
        "drop-a": (0.42, 0.46, 0.07, 0.05),
        "drop-b": (0.50, 0.54, 0.07, 0.05),
        "drop-c": (0.58, 0.46, 0.07, 0.05),
        "mode-tabs": (0.23, 0.975, 0.26, 0.042),
        "sticker-tray": (0.87, 0.045, 0.24, 0.075),
        "brightness-slider": (0.035, 0.42, 0.028, 0.30),
        "action-bar": (0.91, 0.970, 0.16, 0.050),
        "undo-btn": (0.045, 0.035, 0.05, None),
        "upload-btn": (0.045, 0.965, 0.05, None),
    }
    return [
        _photo_layout(screen, scattered),
        _photo_layout(screen, crammed),
        _photo_layout(screen, far_corners),
    ]
