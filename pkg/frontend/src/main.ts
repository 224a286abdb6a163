import { ApiClient } from "./api";
import { el } from "./dom";
import { createRetrainPanel } from "./retrain";
import { createReviewPanel } from "./review";
import "./style.css";

const api = new ApiClient("");

const retrainPanel = createRetrainPanel(api);
const reviewPanel = createReviewPanel(api, () => void retrainPanel.refresh());

const app = document.querySelector("#app");
if (app) {
  app.append(
    el("header", {}, [el("h1", {}, ["IDC patch review"])]),
    el("main", {}, [reviewPanel.root, retrainPanel.root]),
  );
  void retrainPanel.refresh();
}
