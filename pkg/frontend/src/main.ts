/** DOM wiring: side-by-side original and hover-foveated panels. */

import { FoveationApi } from "./api.js";
import { ViewerState } from "./viewer.js";

export function mountViewer(root: HTMLElement, api = new FoveationApi()): void {
  root.innerHTML = `
    <div class="sideeye">
      <header>
        <input type="file" accept="image/png" id="se-file" />
        <span id="se-status">Choose a PNG to foveate.</span>
      </header>
      <main class="panels">
        <figure><img id="se-original" alt="original" /><figcaption>original</figcaption></figure>
        <figure><img id="se-foveated" alt="foveated" /><figcaption>foveated at pointer</figcaption></figure>
      </main>
    </div>`;
  const fileInput = root.querySelector<HTMLInputElement>("#se-file")!;
  const statusEl = root.querySelector<HTMLSpanElement>("#se-status")!;
  const originalEl = root.querySelector<HTMLImageElement>("#se-original")!;
  const foveatedEl = root.querySelector<HTMLImageElement>("#se-foveated")!;

  fileInput.addEventListener("change", async () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    const previewUrl = URL.createObjectURL(file);
    originalEl.src = previewUrl;
    foveatedEl.src = previewUrl; // original until tiles arrive
    const viewer = new ViewerState(api, {
      onProgress: (done, total) => {
        statusEl.textContent = `Foveating: ${done}/${total} tiles`;
      },
      onReady: () => {
        statusEl.textContent = "Hover (or tap) the image to move your gaze.";
      },
      onError: (message) => {
        statusEl.textContent = message;
      },
    });
    const showAt = (clientX: number, clientY: number) => {
      const rect = foveatedEl.getBoundingClientRect();
      const url = viewer.pointerMoved(
        clientX - rect.left,
        clientY - rect.top,
        rect.width,
        rect.height,
      );
      if (url) foveatedEl.src = url;
    };
    foveatedEl.addEventListener("pointermove", (ev) => showAt(ev.clientX, ev.clientY));
    // touch devices foveate at the last touched position
    foveatedEl.addEventListener("touchend", (ev) => {
      const touch = ev.changedTouches[0];
      if (touch) showAt(touch.clientX, touch.clientY);
    });
    try {
      await viewer.uploadAndTrack(file);
    } catch {
      // onError already surfaced the message
    }
  });
}

if (typeof document !== "undefined" && document.getElementById("sideeye-root")) {
  mountViewer(document.getElementById("sideeye-root")!);
}
