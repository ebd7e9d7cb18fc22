import { HttpTransport } from "./api.js";
import { render } from "./render.js";
import { SteeringApp } from "./state.js";

const K = 10;

function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");
  const app = new SteeringApp(new HttpTransport(""), K);
  app.subscribe(() => render(app, root));

  const form = document.getElementById("prompt-form") as HTMLFormElement;
  const input = document.getElementById("prompt-input") as HTMLInputElement;
  form.onsubmit = (ev) => {
    ev.preventDefault();
    const prompt = input.value.trim();
    if (prompt) void app.start(prompt);
  };
  render(app, root);
}

boot();
