from sklearn.datasets import load_wine
from sklearn.linear_model import LinearRegression, Ridge
from sklearn.model_selection import train_test_split
from sklearn.metrics import mean_squared_error
import matplotlib.pyplot as plt

losses = []
data = load_wine(as_frame=True)
X = data.data
y = data.target
X_train, X_test, y_train, y_test = train_test_split(X, y, test_size=0.2, random_state=0)
model = Ridge(alpha=0.5)
model.fit(X_train, y_train)
for epoch in range(1, 31):
    model.fit(X_train, y_train)
    y_pred_train = model.predict(X_train)
    y_pred_test = model.predict(X_test)
    losses.append(mean_squared_error(y_train, y_pred_train))
    plt.figure()
    plt.plot(losses)
    plt.title(f"Loss after epoch {epoch}")
    plt.savefig(f"loss_epoch_{epoch}.png")
