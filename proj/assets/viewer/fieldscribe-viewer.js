/* fieldscribe map viewer: mounts an offline point map and a linked timeline */
(function (global) {
  "use strict";

  function el(tag, cls, parent) {
    var e = document.createElement(tag);
    if (cls) e.className = cls;
    if (parent) parent.appendChild(e);
    return e;
  }

  function check(payload) {
    var problems = [];
    if (!payload || !payload.geojson || !Array.isArray(payload.geojson.features)) problems.push("geojson missing");
    if (!payload || !Array.isArray(payload.timeline)) problems.push("timeline missing");
    if (!payload || !Array.isArray(payload.texts)) problems.push("texts missing");
    if (payload && payload.geojson && payload.timeline && payload.geojson.features &&
        payload.timeline.length !== payload.geojson.features.length) problems.push("timeline length differs from feature count");
    var palette = (payload && payload.palette) || {};
    ((payload && payload.geojson && payload.geojson.features) || []).forEach(function (f) {
      var id = String(f.properties && f.properties.cluster_id);
      if (!(id in palette)) problems.push("no palette entry for cluster " + id);
    });
    return problems;
  }

  function fit(features, width, height) {
    var xs = [], ys = [];
    var lat0 = 0;
    features.forEach(function (f) { lat0 += f.geometry.coordinates[1]; });
    lat0 = features.length ? lat0 / features.length : 0;
    var k = Math.cos(lat0 * Math.PI / 180);
    features.forEach(function (f) { xs.push(f.geometry.coordinates[0] * k); ys.push(f.geometry.coordinates[1]); });
    var minX = Math.min.apply(null, xs), maxX = Math.max.apply(null, xs);
    var minY = Math.min.apply(null, ys), maxY = Math.max.apply(null, ys);
    var span = 100 / 111320;
    if (maxX - minX < span * 1e-6) { minX -= span / 2; maxX += span / 2; }
    if (maxY - minY < span * 1e-6) { minY -= span / 2; maxY += span / 2; }
    var scale = Math.min(width * 0.9 / (maxX - minX), height * 0.9 / (maxY - minY));
    var cx = (minX + maxX) / 2, cy = (minY + maxY) / 2;
    return function (lon, lat) {
      return [width / 2 + (lon * k - cx) * scale, height / 2 - (lat - cy) * scale];
    };
  }

  function time(us) {
    return new Date(Math.floor(us / 1000)).toISOString();
  }

  function mount(elementId) {
    var host = document.getElementById(elementId);
    var source = document.getElementById("fieldscribe-payload");
    if (!host || !source) return null;
    var payload;
    try { payload = JSON.parse(source.textContent); } catch (err) { payload = null; }
    host.innerHTML = "";
    host.style.position = "relative";
    var problems = check(payload);
    if (problems.length) {
      var banner = el("div", "fs-error", host);
      banner.style.cssText = "background:#fdd;color:#900;padding:4px 8px;font:13px sans-serif";
      banner.textContent = "Viewer: " + problems.join("; ");
      if (!payload || !payload.geojson || !Array.isArray(payload.geojson.features)) return null;
    }
    var features = payload.geojson.features;
    var palette = payload.palette || {};
    var width = host.clientWidth || 800, height = host.clientHeight || 500;
    var stage = el("div", "fs-stage", host);
    stage.style.cssText = "position:absolute;left:0;top:0;width:" + width + "px;height:" + height + "px;transform-origin:0 0";
    var project = fit(features, width, height);
    var view = { x: 0, y: 0, s: 1 };
    function apply() { stage.style.transform = "translate(" + view.x + "px," + view.y + "px) scale(" + view.s + ")"; }

    if (payload.tiles) stage.setAttribute("data-tiles", payload.tiles);

    var popup = el("div", "fs-popup", host);
    popup.style.cssText = "position:absolute;display:none;max-width:300px;background:#fff;border:1px solid #888;padding:4px 6px;font:12px sans-serif;z-index:2";

    var points = features.map(function (f, i) {
      var p = project(f.geometry.coordinates[0], f.geometry.coordinates[1]);
      var d = el("div", "fs-point", stage);
      var color = palette[String(f.properties.cluster_id)] || "#777777";
      d.style.cssText = "position:absolute;width:10px;height:10px;margin:-5px 0 0 -5px;border-radius:50%;cursor:pointer;border:1px solid #fff;left:" +
        p[0] + "px;top:" + p[1] + "px;background:" + color;
      d.setAttribute("data-index", String(i));
      d.addEventListener("click", function (ev) {
        ev.stopPropagation();
        popup.textContent = "";
        el("div", "fs-popup-text", popup).textContent = payload.texts[i];
        el("div", "fs-popup-time", popup).textContent = time(f.properties.t_us);
        popup.style.left = Math.min(width - 200, p[0] * view.s + view.x + 8) + "px";
        popup.style.top = (p[1] * view.s + view.y + 8) + "px";
        popup.style.display = "block";
      });
      return d;
    });
    host.addEventListener("click", function () { popup.style.display = "none"; });

    var drag = null;
    host.addEventListener("mousedown", function (ev) { drag = { x: ev.clientX - view.x, y: ev.clientY - view.y }; });
    global.addEventListener("mouseup", function () { drag = null; });
    host.addEventListener("mousemove", function (ev) {
      if (!drag) return;
      view.x = ev.clientX - drag.x;
      view.y = ev.clientY - drag.y;
      apply();
    });
    host.addEventListener("wheel", function (ev) {
      ev.preventDefault();
      var r = host.getBoundingClientRect();
      var mx = ev.clientX - r.left, my = ev.clientY - r.top;
      var f = ev.deltaY < 0 ? 1.2 : 1 / 1.2;
      view.x = mx - (mx - view.x) * f;
      view.y = my - (my - view.y) * f;
      view.s *= f;
      apply();
    }, { passive: false });

    var strip = document.getElementById("fieldscribe-timeline");
    if (strip) {
      var segments = strip.querySelectorAll(".fs-segment");
      Array.prototype.forEach.call(segments, function (seg, i) {
        var entry = payload.timeline[i];
        var target = entry ? features.findIndex(function (f) { return f.properties.clip_index === entry.clip_index; }) : -1;
        if (target < 0) return;
        seg.addEventListener("mouseenter", function () { points[target].style.outline = "2px solid #000"; });
        seg.addEventListener("mouseleave", function () { points[target].style.outline = ""; });
      });
    }
    apply();
    return { points: points };
  }

  global.mountFieldscribeViewer = mount;
})(window);
